use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::adam::AdamConfig;
use crate::train::augment::AugmentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f32,
    pub adam: AdamConfig,
    pub patience_epochs: usize,
    /// Validation-loss decrease that counts as an improvement (strictly greater than).
    pub min_delta: f64,
    pub max_epochs: usize,
    /// Fraction of videos (by source group) held out for early stopping.
    pub validation_fraction: f64,
    pub augmentation: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 2e-4,
            adam: AdamConfig::default(),
            patience_epochs: 10,
            min_delta: 1e-4,
            max_epochs: 100,
            validation_fraction: 0.1,
            augmentation: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batchSize must be >= 1");
        }
        if self.patience_epochs == 0 {
            return bad("patienceEpochs must be >= 1");
        }
        if self.max_epochs == 0 {
            return bad("maxEpochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learningRate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validationFraction must lie in [0, 1)");
        }
        if !(self.min_delta >= 0.0) {
            return bad("minDelta must be non-negative");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        Ok(())
    }
}

/// Which parameters the forgery stage trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Pretrained extractor kept fixed; temporal net and binary head trained.
    Frozen,
    /// Pretrained weights, everything trained.
    FtWhole,
    /// Fresh initialisation, everything trained.
    Scratch,
}

impl std::str::FromStr for FinetuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(FinetuneMode::Frozen),
            "ft_whole" => Ok(FinetuneMode::FtWhole),
            "scratch" => Ok(FinetuneMode::Scratch),
            _ => Err(Error::Config(format!("unknown finetune mode {s:?}; expected frozen, ft_whole or scratch"))),
        }
    }
}
