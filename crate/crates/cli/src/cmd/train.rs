use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use lipforensics::nn::{LipForensicsModel, ModelConfig};
use lipforensics::preprocess::Split;
use lipforensics::tensor::{load_tensors, save_tensors, Rng};
use lipforensics::train::{finetune_forgery, pretrain_lipreading, EpochLog, FinetuneMode, TrainOutcome};

use crate::config::{read_json, read_sidecar, require, sidecar, to_pretty_json, Preset, RunConfig, Stage};
use crate::data::{forgery_samples, lipreading_samples, load_manifest};
use crate::failure::{CliResult, Failure};
use crate::output::write_text;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory for checkpoint.lfw, checkpoint.json, train_log.jsonl and run_config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Option<Stage>,
    #[arg(long)]
    pub mode: Option<FinetuneMode>,
    /// Checkpoint to start from, e.g. a lipreading-pretrained network.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

pub fn resolve(args: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg: RunConfig = read_json(args.config.as_deref())?;
    cfg.seed = Some(args.seed);
    cfg.train.seed = args.seed;
    macro_rules! set {
        ($flag:expr => $($field:tt)+) => {
            if let Some(v) = $flag.clone() {
                cfg.$($field)+ = v;
            }
        };
    }
    set!(args.stage => stage);
    set!(args.mode => finetune_mode);
    set!(args.preset => preset);
    set!(args.epochs => train.max_epochs);
    set!(args.lr => train.learning_rate);
    set!(args.batch_size => train.batch_size);
    set!(args.val_fraction => train.validation_fraction);
    if args.manifest.is_some() {
        cfg.manifest = args.manifest.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.init.is_some() {
        cfg.init = args.init.clone();
    }
    if args.classes.is_some() {
        cfg.lipread_classes = args.classes;
    }
    if args.split.is_some() {
        cfg.split = args.split;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

/// Explicit config, then the init checkpoint's sidecar, then the preset.
pub fn model_config(cfg: &RunConfig, inferred_classes: usize) -> CliResult<ModelConfig> {
    let mc = match (&cfg.model, &cfg.init) {
        (Some(m), _) => m.clone(),
        (None, Some(init)) => read_sidecar(init)?,
        (None, None) => cfg.preset.model(cfg.lipread_classes.unwrap_or(inferred_classes)),
    };
    mc.validate()?;
    Ok(mc)
}

pub fn run(args: &TrainArgs) -> CliResult {
    let cfg = resolve(args)?;
    let manifest = require(&cfg.manifest, "manifest (--manifest or \"manifest\")")?;
    let out = require(&cfg.out, "output directory (--out or \"out\")")?.clone();
    let entries = load_manifest(manifest, cfg.split)?;
    let classes = entries.iter().filter_map(|e| e.word).max().map_or(2, |w| (w + 1).max(2));
    let mc = model_config(&cfg, classes)?;
    let resolved = RunConfig { model: Some(mc.clone()), ..cfg.clone() };
    eprintln!("resolved config: {}", serde_json::to_string(&resolved).expect("serializable"));
    write_text(&out.join("run_config.json"), &to_pretty_json(&resolved))?;

    let init_seed = Rng::new(args.seed).substream_named("model-init").next_u64();
    let (model, mut store) = LipForensicsModel::new(mc.clone(), init_seed)?;
    if let Some(init) = &cfg.init {
        store.load_all(&load_tensors(init)?)?;
    }

    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Failure::Data(format!("{}: {e}", log_path.display())))?);
    let mut observer = |e: &EpochLog| -> lipforensics::Result<()> {
        let line = serde_json::to_string(e).expect("serializable");
        eprintln!("{line}");
        writeln!(log, "{line}").map_err(|err| lipforensics::Error::Data(format!("{}: {err}", log_path.display())))
    };
    let outcome: TrainOutcome = match cfg.stage {
        Stage::Pretrain => {
            let samples = lipreading_samples(&entries, &cfg.preprocess)?;
            pretrain_lipreading(&model, &mut store, &samples, &cfg.train, &mut observer)?
        }
        Stage::Finetune => {
            let samples = forgery_samples(&entries, &cfg.preprocess)?;
            finetune_forgery(&model, &mut store, &samples, cfg.finetune_mode, &cfg.train, &mut observer)?
        }
    };
    log.flush()?;

    let checkpoint = out.join("checkpoint.lfw");
    save_tensors(&checkpoint, &store.to_map())?;
    write_text(&sidecar(&checkpoint), &to_pretty_json(&mc))?;
    println!(
        "trained {} epochs ({} steps), restored epoch {}{}; checkpoint {}",
        outcome.history.len(),
        outcome.steps,
        outcome.best_epoch,
        if outcome.stopped_early { " after early stopping" } else { "" },
        checkpoint.display()
    );
    Ok(())
}
