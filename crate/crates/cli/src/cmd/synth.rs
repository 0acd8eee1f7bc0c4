use std::path::PathBuf;

use clap::Args;
use lipforensics::preprocess::{Manifest, Split};
use lipforensics::synth::{plan_forgery, plan_lipreading, write_videos, ArtefactFamily, DiskOptions, SynthConfig};

use crate::config::{read_json, to_pretty_json};
use crate::failure::CliResult;
use crate::output::write_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Corpus {
    Lipreading,
    Forgery,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub corpus: Corpus,
    /// Output directory; receives frames/, landmarks/ and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// SynthConfig JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub family: Option<ArtefactFamily>,
    #[arg(long)]
    pub strength: Option<f64>,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Prepended to every video id, so corpora generated separately can share a manifest.
    #[arg(long, default_value = "")]
    pub prefix: String,
    #[arg(long, default_value = "synthetic")]
    pub dataset_tag: String,
    #[arg(long, default_value_t = 256)]
    pub frame_size: usize,
    /// Landmark detection noise in pixels.
    #[arg(long, default_value_t = 0.25)]
    pub landmark_noise: f64,
    #[arg(long)]
    pub no_pixel_noise: bool,
}

pub fn run(args: &SynthArgs) -> CliResult {
    let mut cfg: SynthConfig = read_json(args.config.as_deref())?;
    cfg.seed = args.seed;
    if let Some(v) = args.videos {
        cfg.num_videos = v;
    }
    if let Some(v) = args.frames {
        cfg.frames_per_video = v;
    }
    if let Some(v) = args.vocab {
        cfg.vocab = v;
    }
    if let Some(v) = args.family {
        cfg.artefact_family = v;
    }
    if let Some(v) = args.strength {
        cfg.artefact_strength = v;
    }
    eprintln!("synth config: {}", serde_json::to_string(&cfg).expect("serializable"));
    let plans = match args.corpus {
        Corpus::Lipreading => plan_lipreading(&cfg, &args.prefix)?,
        Corpus::Forgery => plan_forgery(&cfg, &args.prefix)?,
    };
    let opts = DiskOptions {
        frame_size: args.frame_size,
        pixel_noise: !args.no_pixel_noise,
        landmark_noise: args.landmark_noise,
        split: args.split,
        dataset_tag: args.dataset_tag.clone(),
    };
    let entries = write_videos(&plans, &args.out, &opts)?;
    let n = entries.len();
    Manifest { entries }.save(args.out.join("manifest.jsonl"))?;
    write_text(&args.out.join("synth_config.json"), &to_pretty_json(&cfg))?;
    println!("wrote {n} videos to {}", args.out.display());
    Ok(())
}
