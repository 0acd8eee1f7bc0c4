use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use lipforensics::corruptions::{apply_corruption_with, psnr, Codec, CorruptionKind, CorruptionSpec};
use lipforensics::eval::{occlusion_fill, occlusion_map, CorrectClass, ForgeryModel, DEFAULT_BLOCK};
use lipforensics::nn::gradcheck::{check_all, DEFAULT_INSTANCES, TOLERANCE};
use lipforensics::nn::{LipForensicsModel, Partition};
use lipforensics::preprocess::{load_frames, luma, save_frame_png, ClipCache, Label};
use lipforensics::tensor::Tensor;
use lipforensics::train::prepare_clip;
use serde::Serialize;

use crate::config::{read_json, to_pretty_json, Preset, RunConfig};
use crate::failure::{CliResult, Failure};
use crate::output::{write_report, write_text};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum CodecChoice {
    Builtin,
    H264,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub kind: CorruptionKind,
    #[arg(long)]
    pub severity: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory of frames (PNG/PPM/PGM), read in name order.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Compression backend: built-in block-DCT codec or an external H.264 encoder.
    #[arg(long, value_enum, default_value = "builtin")]
    pub codec: CodecChoice,
    #[arg(long, default_value = "ffmpeg")]
    pub encoder: PathBuf,
}

pub fn corrupt(args: &CorruptArgs) -> CliResult {
    let spec = CorruptionSpec::new(args.kind, args.severity, args.seed)?;
    let codec = match args.codec {
        CodecChoice::Builtin => Codec::Builtin,
        CodecChoice::H264 => Codec::H264 { program: args.encoder.clone() },
    };
    let frames = load_frames(&args.input)?;
    let out = apply_corruption_with(&frames, &spec, &codec)?;
    for (i, f) in out.iter().enumerate() {
        save_frame_png(args.out.join(format!("{i:05}.png")), f)?;
    }
    println!("{} {} frames, PSNR {:.2} dB", spec.kind, out.len(), psnr(&frames, &out)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct OccludeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Mouth crops: a clip cache file or a directory of crop images.
    #[arg(long)]
    pub clip: PathBuf,
    /// First frame of the clip within the video.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    pub block: usize,
    /// Class whose probability is mapped.
    #[arg(long, default_value = "fake")]
    pub label: Label,
    /// Heatmap PGM; an overlay PNG and a JSON summary are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

fn load_clip_frames(path: &std::path::Path) -> CliResult<Tensor> {
    if !path.is_dir() {
        return Ok(ClipCache::load(path)?.frames);
    }
    let frames = load_frames(path)?;
    let (w, h) = (frames[0].width, frames[0].height);
    let mut data = Vec::with_capacity(frames.len() * w * h);
    for f in &frames {
        if (f.width, f.height) != (w, h) {
            return Err(Failure::Data(format!("{}: frames differ in size", path.display())));
        }
        data.extend(f.data.chunks(3).map(|p| luma(p[0], p[1], p[2])));
    }
    Ok(Tensor::new(vec![frames.len(), h, w, 1], data)?)
}

pub fn occlude(args: &OccludeArgs) -> CliResult {
    let cfg = RunConfig { checkpoint: Some(args.checkpoint.clone()), ..Default::default() };
    let (model, store) = super::eval::load_model(&cfg)?;
    let mc = model.config().clone();
    let frames = load_clip_frames(&args.clip)?;
    let clip = prepare_clip(&frames, args.start, &mc, None)?;
    let scorer = ForgeryModel { model: &model, store: &store, batch_size: args.batch_size };
    let target = CorrectClass { inner: &scorer, label: args.label.as_u8() };
    let map = occlusion_map(&target, &clip, args.block, occlusion_fill(&mc.normalization), args.batch_size)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    map.write_pgm(&args.out)?;
    let s = mc.input_size;
    let norm = mc.normalization;
    let first: Vec<f32> = clip.data()[..s * s].iter().map(|v| 255.0 * (v * norm.std + norm.mean)).collect();
    map.write_overlay(args.out.with_extension("png"), &first)?;
    write_text(&args.out.with_extension("json"), &to_pretty_json(&map))?;
    let (y, x) = map.argmin();
    println!("{} occluded forwards; most sensitive pixel (row {y}, col {x})", map.forwards);
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_INSTANCES)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gradcheck(args: &GradcheckArgs) -> CliResult {
    let reports = check_all(args.instances, args.seed)?;
    let mut table = format!("{:<22} {:>9} {:>12} {:>6}\n", "layer", "instances", "max rel err", "ok");
    for r in &reports {
        let kind = serde_json::to_value(r.kind).expect("serializable");
        let _ = writeln!(
            table,
            "{:<22} {:>9} {:>12.3e} {:>6}",
            kind.as_str().unwrap_or_default(),
            r.instances,
            r.max_relative_error,
            if r.passed { "yes" } else { "NO" }
        );
    }
    print!("{table}");
    if let Some(out) = &args.out {
        write_report(out, &reports, &table)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{:?}", r.kind)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient error above {TOLERANCE} for {}", failed.join(", "))))
    }
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// RunConfig JSON; its `model` wins over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Word classes of the lipreading head (default 500 for full, 4 for desk).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamCounts {
    pub feature_extractor: usize,
    pub temporal_net: usize,
    pub lipread_head: usize,
    pub forgery_head: usize,
    pub total: usize,
    /// Trained in the frozen forgery stage: temporal net plus forgery head.
    pub trainable_frozen: usize,
    /// Network used for forgery detection: extractor, temporal net and forgery head.
    pub detector_total: usize,
}

pub fn params(args: &ParamsArgs) -> CliResult {
    let cfg: RunConfig = read_json(args.config.as_deref())?;
    let preset = args.preset.unwrap_or(cfg.preset);
    let classes = args.classes.or(cfg.lipread_classes).unwrap_or(match preset {
        Preset::Full => 500,
        Preset::Desk => 4,
    });
    let mc = cfg.model.clone().unwrap_or_else(|| preset.model(classes));
    let (_, store) = LipForensicsModel::new(mc, 0)?;
    let [g, h, l, f] = Partition::ALL.map(|p| store.parameter_count(p));
    let counts = ParamCounts {
        feature_extractor: g,
        temporal_net: h,
        lipread_head: l,
        forgery_head: f,
        total: g + h + l + f,
        trainable_frozen: h + f,
        detector_total: g + h + f,
    };
    let mut table = String::new();
    for (name, n) in [
        ("feature_extractor", g),
        ("temporal_net", h),
        ("lipread_head", l),
        ("forgery_head", f),
        ("total", counts.total),
        ("trainable (frozen)", counts.trainable_frozen),
        ("detector total", counts.detector_total),
    ] {
        let _ = writeln!(table, "{name:<20} {n:>12}");
    }
    print!("{table}");
    if let Some(out) = &args.out {
        write_report(out, &counts, &table)?;
    }
    Ok(())
}
