//! Network assemblies: spatio-temporal feature extractor, multi-scale TCN and heads.
//!
//! Data layout through the network:
//!
//! ```text
//! clips        [B, T, 88, 88]
//! front-end    [B, C0, T, 44, 44]   conv3d (5,7,7)/(1,2,2) + BN + ReLU
//!              [B, C0, T, 22, 22]   max-pool (1,3,3)/(1,2,2)
//! trunk        [B*T, C0, 22, 22] -> [B*T, C4, 3, 3]   four ResNet-18 stages
//! embeddings   [B, F, T]            spatial mean, F = C4 (512 at full width)
//! temporal net [B, K*W, T]          four multi-branch blocks, dilation 1, 2, 4, 8
//! head         [B, classes]         temporal mean + linear
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{BatchNormSpec, ConvGeometry, Graph, Mode, PoolGeometry, Var};
use crate::nn::params::{ParamId, ParameterStore, Partition, TensorRole};
use crate::tensor::{Rng, Tensor};

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPS: f32 = 1e-5;
pub const PRELU_INIT: f32 = 0.25;

pub const FRONTEND_KERNEL: [usize; 3] = [5, 7, 7];
pub const FRONTEND_STRIDE: [usize; 3] = [1, 2, 2];
pub const FRONTEND_PADDING: [usize; 3] = [2, 3, 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ExtractorConfig {
    pub frontend_channels: usize,
    /// Output channels of the four ResNet stages; the last one is the embedding width.
    pub stage_channels: [usize; 4],
    pub blocks_per_stage: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TcnConfig {
    pub blocks: usize,
    pub kernel_sizes: Vec<usize>,
    pub branch_width: usize,
    pub dropout: f32,
}

/// Grayscale standardisation applied to `[0, 255]` pixels: `(v / 255 - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: crate::NORM_MEAN, std: crate::NORM_STD }
    }
}

impl Normalization {
    #[inline]
    pub fn apply(&self, v: f32) -> f32 {
        (v / 255.0 - self.mean) / self.std
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ModelConfig {
    pub clip_length: usize,
    pub input_size: usize,
    pub extractor: ExtractorConfig,
    pub tcn: TcnConfig,
    pub lipread_classes: usize,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full(500)
    }
}

impl ModelConfig {
    /// Full-width network: 64-channel front-end, 512-D embeddings, 3 x 256 TCN branches.
    pub fn full(lipread_classes: usize) -> Self {
        ModelConfig {
            clip_length: 25,
            input_size: 88,
            extractor: ExtractorConfig {
                frontend_channels: 64,
                stage_channels: [64, 128, 256, 512],
                blocks_per_stage: 2,
            },
            tcn: TcnConfig { blocks: 4, kernel_sizes: vec![3, 5, 7], branch_width: 256, dropout: 0.2 },
            lipread_classes,
            normalization: Normalization::default(),
        }
    }

    /// Narrow network that trains on one CPU core in minutes.
    pub fn desk(lipread_classes: usize) -> Self {
        ModelConfig {
            clip_length: 25,
            input_size: 88,
            extractor: ExtractorConfig {
                frontend_channels: 8,
                stage_channels: [8, 16, 32, 64],
                blocks_per_stage: 2,
            },
            tcn: TcnConfig { blocks: 4, kernel_sizes: vec![3, 5, 7], branch_width: 8, dropout: 0.2 },
            lipread_classes,
            normalization: Normalization::default(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.extractor.stage_channels[3]
    }

    pub fn tcn_output_dim(&self) -> usize {
        self.tcn.kernel_sizes.len() * self.tcn.branch_width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clip_length == 0 || self.input_size < 16 {
            return bad("clipLength must be >= 1 and inputSize >= 16");
        }
        if self.extractor.frontend_channels == 0
            || self.extractor.stage_channels.contains(&0)
            || self.extractor.blocks_per_stage == 0
        {
            return bad("extractor widths and block counts must be positive");
        }
        if self.tcn.blocks == 0 || self.tcn.kernel_sizes.is_empty() || self.tcn.branch_width == 0 {
            return bad("tcn needs at least one block, one branch and positive width");
        }
        if self.tcn.kernel_sizes.iter().any(|&k| k % 2 == 0) {
            return bad("tcn kernel sizes must be odd for same padding");
        }
        if !(0.0..1.0).contains(&self.tcn.dropout) {
            return bad("tcn dropout must lie in [0, 1)");
        }
        if !(self.normalization.std > 0.0) || !self.normalization.mean.is_finite() {
            return bad("normalization std must be positive and mean finite");
        }
        if self.lipread_classes < 2 {
            return bad("lipreadClasses must be >= 2");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Lipread,
    Forgery,
}

impl Head {
    pub fn partition(self) -> Partition {
        match self {
            Head::Lipread => Partition::LipreadHead,
            Head::Forgery => Partition::ForgeryHead,
        }
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    weight: ParamId,
    bias: Option<ParamId>,
    geom: ConvGeometry,
}

impl ConvLayer {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv(x, w, b, &self.geom)
    }
}

#[derive(Clone, Debug)]
struct BatchNormLayer {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    partition: Partition,
}

impl BatchNormLayer {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let train = g.is_training() && g.store().is_trainable(self.partition);
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.batch_norm(
            x,
            gamma,
            beta,
            BatchNormSpec {
                running_mean: self.running_mean,
                running_var: self.running_var,
                momentum: BN_MOMENTUM,
                eps: BN_EPS,
                train,
            },
        )
    }
}

#[derive(Clone, Debug)]
struct LinearLayer {
    weight: ParamId,
    bias: ParamId,
}

/// Registers tensors under a name prefix with deterministic per-name initialisation.
struct Builder<'a> {
    store: &'a mut ParameterStore,
    rng: Rng,
}

impl Builder<'_> {
    fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = (6.0 / fan_in as f32).sqrt();
        let mut r = self.rng.substream_named(name);
        let t = r.uniform_tensor(shape).map(|u| (2.0 * u - 1.0) * bound);
        self.store.register(name, t, TensorRole::Parameter)
    }

    fn bias(&mut self, name: &str, len: usize, fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f32).sqrt();
        let mut r = self.rng.substream_named(name);
        let t = r.uniform_tensor(&[len]).map(|u| (2.0 * u - 1.0) * bound);
        self.store.register(name, t, TensorRole::Parameter)
    }

    fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize, kernel: &[usize], bias: bool, geom: ConvGeometry) -> Result<ConvLayer> {
        let mut shape = vec![c_out, c_in];
        shape.extend_from_slice(kernel);
        let fan_in = c_in * kernel.iter().product::<usize>();
        let weight = self.kaiming(&format!("{prefix}.weight"), &shape, fan_in)?;
        let bias = if bias { Some(self.bias(&format!("{prefix}.bias"), c_out, fan_in)?) } else { None };
        Ok(ConvLayer { weight, bias, geom })
    }

    fn batch_norm(&mut self, prefix: &str, c: usize) -> Result<BatchNormLayer> {
        let s = &mut *self.store;
        Ok(BatchNormLayer {
            gamma: s.register(&format!("{prefix}.weight"), Tensor::ones(&[c]), TensorRole::Parameter)?,
            beta: s.register(&format!("{prefix}.bias"), Tensor::zeros(&[c]), TensorRole::Parameter)?,
            running_mean: s.register(&format!("{prefix}.running_mean"), Tensor::zeros(&[c]), TensorRole::Buffer)?,
            running_var: s.register(&format!("{prefix}.running_var"), Tensor::ones(&[c]), TensorRole::Buffer)?,
            partition: Partition::of_name(prefix).expect("prefix carries a partition"),
        })
    }

    fn prelu(&mut self, name: &str, c: usize) -> Result<ParamId> {
        self.store.register(name, Tensor::full(&[c], PRELU_INIT), TensorRole::Parameter)
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) -> Result<LinearLayer> {
        Ok(LinearLayer {
            weight: self.kaiming(&format!("{prefix}.weight"), &[d_out, d_in], d_in)?,
            bias: self.bias(&format!("{prefix}.bias"), d_out, d_in)?,
        })
    }
}

#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: ConvLayer,
    bn1: BatchNormLayer,
    conv2: ConvLayer,
    bn2: BatchNormLayer,
    downsample: Option<(ConvLayer, BatchNormLayer)>,
}

impl BasicBlock {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, x)?;
        let h = self.bn1.forward(g, h)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h)?;
        let h = self.bn2.forward(g, h)?;
        let skip = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(g, x)?;
                bn.forward(g, s)?
            }
            None => x,
        };
        let y = g.add(h, skip)?;
        Ok(g.relu(y))
    }
}

#[derive(Clone, Debug)]
struct Branch {
    conv0: ConvLayer,
    bn0: BatchNormLayer,
    prelu0: ParamId,
    conv1: ConvLayer,
    bn1: BatchNormLayer,
}

#[derive(Clone, Debug)]
struct TcnBlock {
    branches: Vec<Branch>,
    downsample: Option<ConvLayer>,
    prelu: ParamId,
    dropout: f32,
}

impl TcnBlock {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let train = g.store().is_trainable(Partition::TemporalNet);
        let mut outs = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let h = br.conv0.forward(g, x)?;
            let h = br.bn0.forward(g, h)?;
            let a = g.param(br.prelu0);
            let h = g.prelu(h, a)?;
            let h = if train { g.dropout(h, self.dropout)? } else { h };
            let h = br.conv1.forward(g, h)?;
            outs.push(br.bn1.forward(g, h)?);
        }
        let cat = g.concat(&outs)?;
        let skip = match &self.downsample {
            Some(conv) => conv.forward(g, x)?,
            None => x,
        };
        let y = g.add(cat, skip)?;
        let a = g.param(self.prelu);
        g.prelu(y, a)
    }
}

/// The complete two-head network. Holds only tensor handles; values live in a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct LipForensicsModel {
    config: ModelConfig,
    frontend_conv: ConvLayer,
    frontend_bn: BatchNormLayer,
    trunk: Vec<BasicBlock>,
    tcn: Vec<TcnBlock>,
    lipread_head: LinearLayer,
    forgery_head: LinearLayer,
}

impl LipForensicsModel {
    /// Builds the model and a freshly initialised store for it.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParameterStore)> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let mut b = Builder { store: &mut store, rng: Rng::new(seed) };
        let ex = &config.extractor;

        let c0 = ex.frontend_channels;
        let frontend_conv = b.conv(
            "feature_extractor.frontend.conv",
            1,
            c0,
            &FRONTEND_KERNEL,
            false,
            ConvGeometry::explicit(&FRONTEND_STRIDE, &FRONTEND_PADDING),
        )?;
        let frontend_bn = b.batch_norm("feature_extractor.frontend.bn", c0)?;

        let mut trunk = Vec::new();
        let mut c_in = c0;
        for (stage, &c_out) in ex.stage_channels.iter().enumerate() {
            for blk in 0..ex.blocks_per_stage {
                let stride = if stage > 0 && blk == 0 { 2 } else { 1 };
                let p = format!("feature_extractor.layer{}.{blk}", stage + 1);
                let conv1 = b.conv(&format!("{p}.conv1"), c_in, c_out, &[3, 3], false, ConvGeometry::explicit(&[stride, stride], &[1, 1]))?;
                let bn1 = b.batch_norm(&format!("{p}.bn1"), c_out)?;
                let conv2 = b.conv(&format!("{p}.conv2"), c_out, c_out, &[3, 3], false, ConvGeometry::explicit(&[1, 1], &[1, 1]))?;
                let bn2 = b.batch_norm(&format!("{p}.bn2"), c_out)?;
                let downsample = if stride != 1 || c_in != c_out {
                    Some((
                        b.conv(&format!("{p}.downsample.conv"), c_in, c_out, &[1, 1], false, ConvGeometry::explicit(&[stride, stride], &[0, 0]))?,
                        b.batch_norm(&format!("{p}.downsample.bn"), c_out)?,
                    ))
                } else {
                    None
                };
                trunk.push(BasicBlock { conv1, bn1, conv2, bn2, downsample });
                c_in = c_out;
            }
        }

        let tc = &config.tcn;
        let width = tc.branch_width;
        let cat = config.tcn_output_dim();
        let mut tcn = Vec::new();
        let mut c_in = config.embedding_dim();
        for blk in 0..tc.blocks {
            let dilation = 1usize << blk;
            let mut branches = Vec::new();
            for (bi, &k) in tc.kernel_sizes.iter().enumerate() {
                let p = format!("temporal_net.block{blk}.branch{bi}");
                branches.push(Branch {
                    conv0: b.conv(&format!("{p}.conv0"), c_in, width, &[k], true, ConvGeometry::dilated_same(dilation))?,
                    bn0: b.batch_norm(&format!("{p}.bn0"), width)?,
                    prelu0: b.prelu(&format!("{p}.prelu0.weight"), width)?,
                    conv1: b.conv(&format!("{p}.conv1"), width, width, &[k], true, ConvGeometry::dilated_same(dilation))?,
                    bn1: b.batch_norm(&format!("{p}.bn1"), width)?,
                });
            }
            let downsample = if c_in != cat {
                Some(b.conv(&format!("temporal_net.block{blk}.downsample"), c_in, cat, &[1], true, ConvGeometry::same(1))?)
            } else {
                None
            };
            let prelu = b.prelu(&format!("temporal_net.block{blk}.prelu.weight"), cat)?;
            tcn.push(TcnBlock { branches, downsample, prelu, dropout: tc.dropout });
            c_in = cat;
        }

        let lipread_head = b.linear("lipread_head.linear", cat, config.lipread_classes)?;
        let forgery_head = b.linear("forgery_head.linear", cat, 1)?;

        let model = LipForensicsModel { config, frontend_conv, frontend_bn, trunk, tcn, lipread_head, forgery_head };
        Ok((model, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// A store for this architecture with fresh initial values drawn from `seed`.
    pub fn init_store(&self, seed: u64) -> Result<ParameterStore> {
        Ok(Self::new(self.config.clone(), seed)?.1)
    }

    /// Re-draws the initial values of one partition, e.g. a fresh binary head.
    pub fn reinitialize(&self, store: &mut ParameterStore, partition: Partition, seed: u64) -> Result<()> {
        let fresh = self.init_store(seed)?;
        store.load_partitions(&fresh.partition_map(partition), &[partition])
    }

    fn check_clips(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.input_size;
        if shape.len() != 4 || shape[2] != s || shape[3] != s {
            return Err(Error::InvalidArgument(format!(
                "clip batch {shape:?} does not match the configured input [B, T, {s}, {s}]"
            )));
        }
        Ok(())
    }

    /// `[B, T, S, S]` clips to per-frame embeddings `[B, F, T]`.
    pub fn extract(&self, g: &mut Graph, clips: Var) -> Result<Var> {
        let shape = g.shape(clips).to_vec();
        self.check_clips(&shape)?;
        let (b, t, s) = (shape[0], shape[1], shape[2]);
        let x = g.reshape(clips, &[b, 1, t, s, s])?;
        let x = self.frontend_conv.forward(g, x)?;
        let x = self.frontend_bn.forward(g, x)?;
        let x = g.relu(x);
        let x = g.max_pool(x, &PoolGeometry { kernel: vec![1, 3, 3], stride: vec![1, 2, 2], padding: vec![0, 1, 1] })?;
        let ps = g.shape(x).to_vec();
        let x = g.permute(x, &[0, 2, 1, 3, 4])?;
        let mut x = g.reshape(x, &[b * t, ps[1], ps[3], ps[4]])?;
        for block in &self.trunk {
            x = block.forward(g, x)?;
        }
        let e = g.spatial_mean(x)?;
        let f = g.shape(e)[1];
        let e = g.reshape(e, &[b, t, f])?;
        g.permute(e, &[0, 2, 1])
    }

    /// `[B, F, T]` embeddings to temporal features `[B, C_out, T]`.
    pub fn temporal(&self, g: &mut Graph, embeddings: Var) -> Result<Var> {
        let shape = g.shape(embeddings);
        if shape.len() != 3 || shape[1] != self.config.embedding_dim() {
            return Err(Error::InvalidArgument(format!(
                "temporal net expects [B, {}, T], got {shape:?}",
                self.config.embedding_dim()
            )));
        }
        let mut x = embeddings;
        for block in &self.tcn {
            x = block.forward(g, x)?;
        }
        Ok(x)
    }

    /// Temporal average pooling plus the linear head: `[B, C_out, T]` to `[B, classes]`.
    pub fn head(&self, g: &mut Graph, features: Var, head: Head) -> Result<Var> {
        let pooled = g.mean_axis(features, 2)?;
        let layer = match head {
            Head::Lipread => &self.lipread_head,
            Head::Forgery => &self.forgery_head,
        };
        let (w, b) = (g.param(layer.weight), g.param(layer.bias));
        g.linear(pooled, w, b)
    }

    /// Full forward pass to logits.
    pub fn forward(&self, g: &mut Graph, clips: Var, head: Head) -> Result<Var> {
        let e = self.extract(g, clips)?;
        let t = self.temporal(g, e)?;
        self.head(g, t, head)
    }

    /// Per-frame embeddings `[T, F]` of one `[T, S, S, 1]` clip.
    pub fn feature_extract(&self, store: &ParameterStore, clip: &Tensor, mode: Mode) -> Result<Tensor> {
        let cs = clip.shape();
        if cs.len() != 4 || cs[3] != 1 {
            return Err(Error::InvalidArgument(format!("clip must be [T, H, W, 1], got {cs:?}")));
        }
        let mut g = Graph::new(store, mode, 0);
        let x = g.input(clip.clone().reshape(vec![1, cs[0], cs[1], cs[2]])?);
        let e = self.extract(&mut g, x)?;
        let e = g.permute(e, &[0, 2, 1])?;
        let f = g.shape(e)[2];
        g.value(e).clone().reshape(vec![cs[0], f])
    }

    /// Temporal-net output `[T, C_out]` for one `[T, F]` embedding sequence.
    pub fn mstcn_forward(&self, store: &ParameterStore, embeddings: &Tensor, mode: Mode) -> Result<Tensor> {
        let es = embeddings.shape();
        if es.len() != 2 {
            return Err(Error::InvalidArgument(format!("embeddings must be [T, F], got {es:?}")));
        }
        let mut g = Graph::new(store, mode, 0);
        let x = g.input(embeddings.permute(&[1, 0])?.reshape(vec![1, es[1], es[0]])?);
        let y = self.temporal(&mut g, x)?;
        let c = g.shape(y)[1];
        g.value(y).clone().reshape(vec![c, es[0]])?.permute(&[1, 0])
    }

    /// Logits for one `[T, C_out]` feature sequence.
    pub fn classify(&self, store: &ParameterStore, features: &Tensor, head: Head) -> Result<Tensor> {
        let fs = features.shape();
        if fs.len() != 2 || fs[1] != self.config.tcn_output_dim() {
            return Err(Error::InvalidArgument(format!(
                "head expects [T, {}], got {fs:?}",
                self.config.tcn_output_dim()
            )));
        }
        let mut g = Graph::new(store, Mode::Eval, 0);
        let x = g.input(features.permute(&[1, 0])?.reshape(vec![1, fs[1], fs[0]])?);
        let y = self.head(&mut g, x, head)?;
        let n = g.shape(y)[1];
        g.value(y).clone().reshape(vec![n])
    }

    /// Logits `[B, classes]` for a batch of `[T, S, S, 1]` clips, evaluated without recording gradients.
    pub fn infer(&self, store: &ParameterStore, clips: &[Tensor], head: Head) -> Result<Vec<Vec<f32>>> {
        let first = clips.first().ok_or_else(|| Error::InvalidArgument("no clips".into()))?;
        let cs = first.shape().to_vec();
        if cs.len() != 4 || cs[3] != 1 {
            return Err(Error::InvalidArgument(format!("clip must be [T, H, W, 1], got {cs:?}")));
        }
        let mut data = Vec::with_capacity(first.numel() * clips.len());
        for c in clips {
            if c.shape() != cs.as_slice() {
                return Err(Error::shape(&cs, c.shape()));
            }
            data.extend_from_slice(c.data());
        }
        let mut g = Graph::new(store, Mode::Eval, 0);
        let x = g.input(Tensor::new(vec![clips.len(), cs[0], cs[1], cs[2]], data)?);
        let y = self.forward(&mut g, x, head)?;
        let n = g.shape(y)[1];
        Ok(g.value(y).data().chunks(n).map(|r| r.to_vec()).collect())
    }
}
