use std::path::PathBuf;

use clap::Args;
use lipforensics::corruptions::corrupt_gray_video;
use lipforensics::eval::{
    protocol_clip_sweep, protocol_cross_manipulation, protocol_plain, protocol_robustness, ForgeryModel,
};
use lipforensics::nn::{LipForensicsModel, ModelConfig, ParameterStore};
use lipforensics::preprocess::Split;
use lipforensics::tensor::load_tensors;
use lipforensics::train::FinetuneMode;
use serde::Serialize;

use crate::config::{read_json, read_sidecar, require, Protocol, RunConfig};
use crate::data::{forgery_samples, load_manifest};
use crate::failure::CliResult;
use crate::output::write_report;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Test videos.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
    /// Report path; the text table goes next to it with a `.txt` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Training videos for the cross-manipulation protocol.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    /// Methods to hold out in turn (default: every fake method in the test manifest).
    #[arg(long, value_delimiter = ',')]
    pub held_out: Vec<String>,
    /// Seeds corruption parameters (robustness) or finetuning (cross-manipulation).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<FinetuneMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub clip_lengths: Vec<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Envelope<'a, T: Serialize> {
    protocol: Protocol,
    test_videos: usize,
    result: &'a T,
}

pub fn resolve(args: &EvalArgs) -> CliResult<RunConfig> {
    let mut cfg: RunConfig = read_json(args.config.as_deref())?;
    if args.checkpoint.is_some() {
        cfg.checkpoint = args.checkpoint.clone();
    }
    if args.manifest.is_some() {
        cfg.manifest = args.manifest.clone();
    }
    if args.train_manifest.is_some() {
        cfg.train_manifest = args.train_manifest.clone();
    }
    if let Some(p) = args.protocol {
        cfg.protocol = p;
    }
    if args.split.is_some() {
        cfg.split = args.split;
    }
    if !args.held_out.is_empty() {
        cfg.held_out = args.held_out.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
        cfg.train.seed = s;
    }
    if let Some(m) = args.mode {
        cfg.finetune_mode = m;
    }
    if let Some(e) = args.epochs {
        cfg.train.max_epochs = e;
    }
    if !args.clip_lengths.is_empty() {
        cfg.clip_lengths = args.clip_lengths.clone();
    }
    if let Some(b) = args.batch_size {
        cfg.eval_batch_size = b;
    }
    cfg.out = Some(args.out.clone());
    Ok(cfg)
}

pub fn load_model(cfg: &RunConfig) -> CliResult<(LipForensicsModel, ParameterStore)> {
    let checkpoint = require(&cfg.checkpoint, "checkpoint (--checkpoint or \"checkpoint\")")?;
    let mc: ModelConfig = match &cfg.model {
        Some(m) => m.clone(),
        None => read_sidecar(checkpoint)?,
    };
    let (model, mut store) = LipForensicsModel::new(mc, 0)?;
    store.load_all(&load_tensors(checkpoint)?)?;
    Ok((model, store))
}

pub fn run(args: &EvalArgs) -> CliResult {
    let cfg = resolve(args)?;
    eprintln!("resolved config: {}", serde_json::to_string(&cfg).expect("serializable"));
    let (model, store) = load_model(&cfg)?;
    let mc = model.config().clone();
    let manifest = require(&cfg.manifest, "manifest (--manifest or \"manifest\")")?;
    let test = forgery_samples(&load_manifest(manifest, cfg.split)?, &cfg.preprocess)?;
    let scorer = ForgeryModel { model: &model, store: &store, batch_size: cfg.eval_batch_size };
    let n = test.len();
    let (json, table) = match cfg.protocol {
        Protocol::Plain => {
            let r = protocol_plain(&scorer, &mc, &test)?;
            (envelope(cfg.protocol, n, &r), r.table())
        }
        Protocol::CrossManipulation => {
            let train_manifest = require(&cfg.train_manifest, "training manifest (--train-manifest)")?;
            let train = forgery_samples(&load_manifest(train_manifest, None)?, &cfg.preprocess)?;
            let r = protocol_cross_manipulation(
                &model,
                &store,
                &train,
                &test,
                &cfg.held_out,
                cfg.finetune_mode,
                &cfg.train,
                cfg.eval_batch_size,
            )?;
            (envelope(cfg.protocol, n, &r), r.table())
        }
        Protocol::Robustness => {
            let seed = cfg.seed.unwrap_or(0);
            let r = protocol_robustness(&scorer, &mc, &test, seed, &corrupt_gray_video)?;
            (envelope(cfg.protocol, n, &r), r.table())
        }
        Protocol::ClipSweep => {
            let r = protocol_clip_sweep(&scorer, &mc, &test, &cfg.clip_lengths)?;
            (envelope(cfg.protocol, n, &r), r.table())
        }
    };
    write_report(&args.out, &json, &table)?;
    print!("{table}");
    Ok(())
}

fn envelope<T: Serialize>(protocol: Protocol, test_videos: usize, result: &T) -> serde_json::Value {
    serde_json::to_value(Envelope { protocol, test_videos, result }).expect("serializable")
}
