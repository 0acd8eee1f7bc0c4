use std::path::{Path, PathBuf};

use clap::Args;
use lipforensics::preprocess::{ClipCache, Manifest, ManifestEntry, PreprocessConfig};
use rayon::prelude::*;

use crate::config::{read_json, to_pretty_json};
use crate::data::load_crops;
use crate::failure::{CliResult, Failure};
use crate::output::write_text;

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Manifest of full-frame videos with landmark tracks.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; receives crops/<videoId>.lfw, landmarks/<videoId>.json and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// PreprocessConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    pub clip_length: usize,
}

fn copy(from: &Path, to: &Path) -> CliResult {
    std::fs::copy(from, to).map(|_| ()).map_err(|e| Failure::Data(format!("{}: {e}", from.display())))
}

pub fn run(args: &PreprocessArgs) -> CliResult {
    let cfg: PreprocessConfig = read_json(args.config.as_deref())?;
    cfg.validate()?;
    if args.clip_length == 0 {
        return Err(Failure::Config("clip length must be positive".into()));
    }
    eprintln!("preprocess config: {}", serde_json::to_string(&cfg).expect("serializable"));
    let manifest = Manifest::load(&args.manifest)?;
    for dir in ["crops", "landmarks"].map(|d| args.out.join(d)) {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    let entries: Vec<ManifestEntry> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let crops = load_crops(e, &cfg)?;
            let rel = PathBuf::from("crops").join(format!("{}.lfw", e.video_id));
            ClipCache::build(crops, args.clip_length)?.save(args.out.join(&rel))?;
            let marks = PathBuf::from("landmarks").join(format!("{}.json", e.video_id));
            copy(&e.landmarks_path, &args.out.join(&marks))?;
            Ok(ManifestEntry { frames_path: rel, landmarks_path: marks, ..e.clone() })
        })
        .collect::<CliResult<_>>()?;
    let n = entries.len();
    Manifest { entries }.save(args.out.join("manifest.jsonl"))?;
    write_text(&args.out.join("preprocess_config.json"), &to_pretty_json(&cfg))?;
    println!("cropped {n} videos into {}", args.out.display());
    Ok(())
}
