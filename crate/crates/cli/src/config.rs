use std::fs;
use std::path::{Path, PathBuf};

use lipforensics::nn::ModelConfig;
use lipforensics::preprocess::{PreprocessConfig, Split};
use lipforensics::train::{FinetuneMode, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

impl Preset {
    pub fn model(self, lipread_classes: usize) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(lipread_classes),
            Preset::Full => ModelConfig::full(lipread_classes),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    #[default]
    Finetune,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    Plain,
    CrossManipulation,
    Robustness,
    ClipSweep,
}

/// Everything `train` and `eval` need, as one JSON document. Flags override fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct RunConfig {
    pub preset: Preset,
    /// Explicit architecture; takes precedence over `preset` and any checkpoint sidecar.
    pub model: Option<ModelConfig>,
    pub lipread_classes: Option<usize>,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub stage: Stage,
    pub finetune_mode: FinetuneMode,
    pub manifest: Option<PathBuf>,
    pub train_manifest: Option<PathBuf>,
    pub split: Option<Split>,
    pub init: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub protocol: Protocol,
    pub held_out: Vec<String>,
    pub clip_lengths: Vec<usize>,
    pub eval_batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Desk,
            model: None,
            lipread_classes: None,
            preprocess: PreprocessConfig::default(),
            train: TrainConfig::default(),
            stage: Stage::Finetune,
            finetune_mode: FinetuneMode::Frozen,
            manifest: None,
            train_manifest: None,
            split: None,
            init: None,
            checkpoint: None,
            out: None,
            seed: None,
            protocol: Protocol::Plain,
            held_out: Vec::new(),
            clip_lengths: lipforensics::eval::SWEEP_LENGTHS.to_vec(),
            eval_batch_size: 16,
        }
    }
}

/// Parses a JSON file into `T`, rejecting unknown keys; `None` gives the defaults.
pub fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn require<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T, Failure> {
    value.as_ref().ok_or_else(|| Failure::Config(format!("missing {what}")))
}

/// Model config stored next to a checkpoint: `run/checkpoint.lfw` pairs with `run/checkpoint.json`.
pub fn sidecar(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn read_sidecar(checkpoint: &Path) -> Result<ModelConfig, Failure> {
    let path = sidecar(checkpoint);
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Data(format!("{}: {e} (model config sidecar of the checkpoint)", path.display())))?;
    let cfg: ModelConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("config types serialize");
    s.push('\n');
    s
}
