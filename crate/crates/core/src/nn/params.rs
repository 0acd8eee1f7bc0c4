//! Named model tensors, partitioned by sub-network.
//!
//! Names are dotted paths `partition.block.layer.tensor`, e.g.
//! `temporal_net.block2.branch1.conv0.weight`. The first segment decides the
//! partition. Batch-norm running statistics are stored as buffers: they are
//! saved in checkpoints but never receive gradients and are not counted as
//! trainable parameters.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Spatio-temporal front-end plus ResNet-18 trunk.
    FeatureExtractor,
    /// Multi-scale temporal convolutional network.
    TemporalNet,
    LipreadHead,
    ForgeryHead,
}

impl Partition {
    pub const ALL: [Partition; 4] =
        [Partition::FeatureExtractor, Partition::TemporalNet, Partition::LipreadHead, Partition::ForgeryHead];

    pub fn prefix(self) -> &'static str {
        match self {
            Partition::FeatureExtractor => "feature_extractor",
            Partition::TemporalNet => "temporal_net",
            Partition::LipreadHead => "lipread_head",
            Partition::ForgeryHead => "forgery_head",
        }
    }

    pub fn of_name(name: &str) -> Option<Partition> {
        let head = name.split('.').next()?;
        Partition::ALL.into_iter().find(|p| p.prefix() == head)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    Parameter,
    Buffer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    tensor: Tensor,
    role: TensorRole,
    partition: Partition,
}

#[derive(Clone, Debug)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
    trainable: [bool; 4],
}

impl Default for ParameterStore {
    fn default() -> Self {
        ParameterStore { entries: Vec::new(), index: HashMap::new(), trainable: [true; 4] }
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, tensor: Tensor, role: TensorRole) -> Result<ParamId> {
        let partition = Partition::of_name(name)
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {name} has no known partition prefix")))?;
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("parameter {name} registered twice")));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Entry { name: name.to_string(), tensor, role, partition });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn role(&self, id: ParamId) -> TensorRole {
        self.entries[id.0].role
    }

    pub fn partition(&self, id: ParamId) -> Partition {
        self.entries[id.0].partition
    }

    pub fn set_trainable(&mut self, partition: Partition, trainable: bool) {
        self.trainable[partition.index()] = trainable;
    }

    pub fn is_trainable(&self, partition: Partition) -> bool {
        self.trainable[partition.index()]
    }

    /// Whether `id` is a parameter in a trainable partition.
    pub fn requires_grad(&self, id: ParamId) -> bool {
        let e = &self.entries[id.0];
        e.role == TensorRole::Parameter && self.trainable[e.partition.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn ids_in(&self, partition: Partition) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(move |&id| self.partition(id) == partition)
    }

    /// Number of scalar parameters (buffers excluded) in `partition`.
    pub fn parameter_count(&self, partition: Partition) -> usize {
        self.entries
            .iter()
            .filter(|e| e.partition == partition && e.role == TensorRole::Parameter)
            .map(|e| e.tensor.numel())
            .sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        Partition::ALL.iter().filter(|&&p| self.is_trainable(p)).map(|&p| self.parameter_count(p)).sum()
    }

    pub fn to_map(&self) -> TensorMap {
        self.entries.iter().map(|e| (e.name.clone(), e.tensor.clone())).collect()
    }

    pub fn partition_map(&self, partition: Partition) -> TensorMap {
        self.entries.iter().filter(|e| e.partition == partition).map(|e| (e.name.clone(), e.tensor.clone())).collect()
    }

    /// Overwrites every tensor of the given partitions from `map`. Names and shapes must match.
    pub fn load_partitions(&mut self, map: &TensorMap, partitions: &[Partition]) -> Result<()> {
        for e in self.entries.iter_mut().filter(|e| partitions.contains(&e.partition)) {
            let src = map
                .get(&e.name)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint is missing tensor {}", e.name)))?;
            if src.shape() != e.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?} in checkpoint but {:?} in the model config",
                    e.name,
                    src.shape(),
                    e.tensor.shape()
                )));
            }
            e.tensor = src.clone();
        }
        Ok(())
    }

    pub fn load_all(&mut self, map: &TensorMap) -> Result<()> {
        let unknown: Vec<&String> = map.keys().filter(|k| !self.index.contains_key(*k)).collect();
        if !unknown.is_empty() {
            return Err(Error::Checkpoint(format!("checkpoint has tensors unknown to the model: {unknown:?}")));
        }
        self.load_partitions(map, &Partition::ALL)
    }
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) params: BTreeMap<ParamId, Tensor>,
    pub(crate) inputs: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_from_prefix() {
        assert_eq!(Partition::of_name("temporal_net.block0.prelu.weight"), Some(Partition::TemporalNet));
        assert_eq!(Partition::of_name("something.else"), None);
        let mut s = ParameterStore::new();
        assert!(s.register("bogus.w", Tensor::ones(&[1]), TensorRole::Parameter).is_err());
        s.register("forgery_head.linear.weight", Tensor::ones(&[1, 3]), TensorRole::Parameter).unwrap();
        assert!(s.register("forgery_head.linear.weight", Tensor::ones(&[1]), TensorRole::Parameter).is_err());
    }

    #[test]
    fn freezing_and_counts() {
        let mut s = ParameterStore::new();
        let w = s.register("feature_extractor.a.weight", Tensor::ones(&[2, 3]), TensorRole::Parameter).unwrap();
        let m = s.register("feature_extractor.a.running_mean", Tensor::ones(&[2]), TensorRole::Buffer).unwrap();
        let h = s.register("temporal_net.b.weight", Tensor::ones(&[4]), TensorRole::Parameter).unwrap();
        assert!(s.requires_grad(w) && !s.requires_grad(m) && s.requires_grad(h));
        s.set_trainable(Partition::FeatureExtractor, false);
        assert!(!s.requires_grad(w));
        assert_eq!(s.parameter_count(Partition::FeatureExtractor), 6);
        assert_eq!(s.trainable_parameter_count(), 4);
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let mut s = ParameterStore::new();
        s.register("temporal_net.w", Tensor::ones(&[2]), TensorRole::Parameter).unwrap();
        let mut map = TensorMap::new();
        map.insert("temporal_net.w".into(), Tensor::ones(&[3]));
        assert!(s.load_all(&map).is_err());
        map.insert("temporal_net.w".into(), Tensor::full(&[2], 5.0));
        s.load_all(&map).unwrap();
        assert_eq!(s.by_name("temporal_net.w").unwrap().data(), &[5.0, 5.0]);
    }
}
