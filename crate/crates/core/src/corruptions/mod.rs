//! Test-time perturbations: seven families at five severities each, plus PSNR.
//!
//! Every function here is pure in `(frames, spec)`. Outputs are rounded and
//! clipped to 8-bit values.

mod dct;
mod filters;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{load_frames, quantize, save_frame_png, Frame};
use crate::tensor::{Rng, Tensor};

pub use dct::{code_plane, code_rgb, quant_table};
pub use filters::{gaussian_blur, gaussian_kernel, pixelate};

pub const SEVERITIES: std::ops::RangeInclusive<u8> = 1..=5;

pub const SATURATION_FACTORS: [f64; 5] = [0.7, 0.55, 0.4, 0.25, 0.1];
pub const CONTRAST_FACTORS: [f64; 5] = [0.85, 0.725, 0.6, 0.475, 0.35];
pub const BLOCK_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];
pub const BLOCK_SIZE: usize = 32;
pub const BLOCK_FILL: f32 = 128.0;
pub const NOISE_SIGMAS: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];
pub const BLUR_SIGMAS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];
pub const PIXELATION_FACTORS: [f64; 5] = [0.5, 0.4, 0.3, 0.25, 0.2];
pub const DCT_QUALITIES: [u32; 5] = [50, 35, 25, 15, 10];
pub const H264_CRFS: [u32; 5] = [23, 28, 33, 38, 43];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Saturation,
    Contrast,
    Block,
    Noise,
    Blur,
    Pixelation,
    Compression,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 7] = [
        CorruptionKind::Saturation,
        CorruptionKind::Contrast,
        CorruptionKind::Block,
        CorruptionKind::Noise,
        CorruptionKind::Blur,
        CorruptionKind::Pixelation,
        CorruptionKind::Compression,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            CorruptionKind::Saturation => "saturation",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Block => "block",
            CorruptionKind::Noise => "noise",
            CorruptionKind::Blur => "blur",
            CorruptionKind::Pixelation => "pixelation",
            CorruptionKind::Compression => "compression",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown corruption kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        let spec = CorruptionSpec { kind, severity, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !SEVERITIES.contains(&self.severity) {
            return Err(Error::InvalidArgument(format!("severity {} outside 1..=5", self.severity)));
        }
        Ok(())
    }

    fn level(&self) -> usize {
        self.severity as usize - 1
    }
}

/// Compression backend. `H264` shells out to an ffmpeg-compatible encoder.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Codec {
    #[default]
    Builtin,
    H264 { program: PathBuf },
}

fn check_video(frames: &[Frame]) -> Result<(usize, usize)> {
    let first = frames.first().ok_or_else(|| Error::Data("video has no frames".into()))?;
    for (i, f) in frames.iter().enumerate() {
        if f.channels != 3 || f.width != first.width || f.height != first.height {
            return Err(Error::Data(format!(
                "frame {i} is {}x{}x{}, expected RGB {}x{}",
                f.width, f.height, f.channels, first.width, first.height
            )));
        }
        if f.data.iter().any(|v| !(0.0..=255.0).contains(v)) {
            return Err(Error::Data(format!("frame {i} has samples outside [0, 255]")));
        }
    }
    Ok((first.width, first.height))
}

fn finish(mut f: Frame) -> Frame {
    f.data.iter_mut().for_each(|v| *v = quantize(*v) as f32);
    f
}

fn planes(f: &Frame) -> [Vec<f64>; 3] {
    std::array::from_fn(|c| f.data.iter().skip(c).step_by(3).map(|&v| v as f64).collect())
}

fn interleave(f: &Frame, planes: &[Vec<f64>; 3]) -> Frame {
    let data = (0..f.width * f.height).flat_map(|i| planes.iter().map(move |p| p[i] as f32)).collect();
    Frame { data, ..f.clone() }
}

/// Top-left corners of the severity-5 block set; lower severities use a prefix, so positions are nested.
pub fn block_positions(seed: u64, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut rng = Rng::new(seed).substream_named("block");
    let (bw, bh) = (BLOCK_SIZE.min(width), BLOCK_SIZE.min(height));
    (0..BLOCK_COUNTS[4]).map(|_| (rng.below(width - bw + 1), rng.below(height - bh + 1))).collect()
}

/// Applies `spec` with the built-in codec.
pub fn apply_corruption(frames: &[Frame], spec: &CorruptionSpec) -> Result<Vec<Frame>> {
    apply_corruption_with(frames, spec, &Codec::Builtin)
}

pub fn apply_corruption_with(frames: &[Frame], spec: &CorruptionSpec, codec: &Codec) -> Result<Vec<Frame>> {
    spec.validate()?;
    let (w, h) = check_video(frames)?;
    let level = spec.level();
    let out = match spec.kind {
        CorruptionKind::Saturation => {
            // With hue and value fixed, every channel is affine in HSV saturation:
            // c = V (1 - S k_c), so scaling S by s maps c to V - s (V - c).
            let s = SATURATION_FACTORS[level] as f32;
            frames
                .iter()
                .map(|f| {
                    let mut out = f.clone();
                    for px in out.data.chunks_exact_mut(3) {
                        let v = px[0].max(px[1]).max(px[2]);
                        px.iter_mut().for_each(|c| *c = v - s * (v - *c));
                    }
                    out
                })
                .collect()
        }
        CorruptionKind::Contrast => {
            let c = CONTRAST_FACTORS[level] as f32;
            frames.iter().map(|f| Frame { data: f.data.iter().map(|&x| (x - 128.0) * c + 128.0).collect(), ..f.clone() }).collect()
        }
        CorruptionKind::Block => {
            let blocks = &block_positions(spec.seed, w, h)[..BLOCK_COUNTS[level]];
            let (bw, bh) = (BLOCK_SIZE.min(w), BLOCK_SIZE.min(h));
            frames
                .iter()
                .map(|f| {
                    let mut out = f.clone();
                    for &(x0, y0) in blocks {
                        for y in y0..y0 + bh {
                            out.data[(y * w + x0) * 3..(y * w + x0 + bw) * 3].fill(BLOCK_FILL);
                        }
                    }
                    out
                })
                .collect()
        }
        CorruptionKind::Noise => {
            let sigma = (NOISE_SIGMAS[level] * 255.0) as f32;
            let root = Rng::new(spec.seed).substream_named("noise");
            frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let mut rng = root.substream(&[i as u64]);
                    Frame { data: f.data.iter().map(|&x| x + sigma * rng.standard_normal()).collect(), ..f.clone() }
                })
                .collect()
        }
        CorruptionKind::Blur => frames
            .iter()
            .map(|f| {
                let p = planes(f).map(|p| gaussian_blur(&p, w, h, BLUR_SIGMAS[level]));
                interleave(f, &p)
            })
            .collect(),
        CorruptionKind::Pixelation => {
            let factor = PIXELATION_FACTORS[level];
            let sw = ((w as f64 * factor).round() as usize).max(1);
            let sh = ((h as f64 * factor).round() as usize).max(1);
            frames.iter().map(|f| interleave(f, &planes(f).map(|p| pixelate(&p, w, h, sw, sh)))).collect()
        }
        CorruptionKind::Compression => match codec {
            Codec::Builtin => frames
                .iter()
                .map(|f| Frame { data: code_rgb(&f.data, w, h, DCT_QUALITIES[level]), ..f.clone() })
                .collect(),
            Codec::H264 { program } => h264_round_trip(frames, H264_CRFS[level], program)?,
        },
    };
    Ok(out.into_iter().map(finish).collect())
}

fn h264_round_trip(frames: &[Frame], crf: u32, program: &Path) -> Result<Vec<Frame>> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let (src, dst) = (dir.path().join("in"), dir.path().join("out"));
    std::fs::create_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
    for (i, f) in frames.iter().enumerate() {
        save_frame_png(src.join(format!("{i:05}.png")), f)?;
    }
    let video = dir.path().join("clip.mp4");
    let run = |args: Vec<String>| -> Result<()> {
        let status = Command::new(program)
            .args(&args)
            .status()
            .map_err(|e| Error::ExternalTool(format!("{}: {e}", program.display())))?;
        if !status.success() {
            return Err(Error::ExternalTool(format!("{} exited with {status}", program.display())));
        }
        Ok(())
    };
    let p = |p: &Path| p.display().to_string();
    run(vec![
        "-y".into(), "-loglevel".into(), "error".into(), "-framerate".into(), "25".into(),
        "-i".into(), p(&src.join("%05d.png")), "-c:v".into(), "libx264".into(), "-crf".into(), crf.to_string(),
        "-pix_fmt".into(), "yuv444p".into(), p(&video),
    ])?;
    run(vec![
        "-y".into(), "-loglevel".into(), "error".into(), "-i".into(), p(&video),
        "-pix_fmt".into(), "rgb24".into(), p(&dst.join("%05d.png")),
    ])?;
    let decoded = load_frames(&dst)?;
    if decoded.len() != frames.len() {
        return Err(Error::ExternalTool(format!("encoder returned {} of {} frames", decoded.len(), frames.len())));
    }
    Ok(decoded)
}

/// Corrupts a `[F, H, W, 1]` grayscale video by replicating it to RGB and taking luma afterwards.
pub fn corrupt_gray_video(frames: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    let (f, h, w) = match frames.shape() {
        &[f, h, w, 1] => (f, h, w),
        s => return Err(Error::Data(format!("expected [F, H, W, 1] frames, got {s:?}"))),
    };
    let plane = h * w;
    let rgb: Vec<Frame> = (0..f)
        .map(|i| Frame {
            width: w,
            height: h,
            channels: 3,
            data: frames.data()[i * plane..(i + 1) * plane]
                .iter()
                .flat_map(|&v| {
                    let v = quantize(v) as f32;
                    [v, v, v]
                })
                .collect(),
        })
        .collect();
    let out = apply_corruption(&rgb, spec)?;
    let data = out
        .iter()
        .flat_map(|fr| fr.data.chunks_exact(3).map(|p| crate::preprocess::luma(p[0], p[1], p[2])).collect::<Vec<_>>())
        .collect();
    Tensor::new(frames.shape().to_vec(), data)
}

/// `10 log10(255² / MSE)` over every sample of two equally shaped videos; `+∞` when identical.
pub fn psnr(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(&[a.len()], &[b.len()]));
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for (x, y) in a.iter().zip(b) {
        if (x.width, x.height, x.channels) != (y.width, y.height, y.channels) {
            return Err(Error::shape(&[x.height, x.width, x.channels], &[y.height, y.width, y.channels]));
        }
        sum += x.data.iter().zip(&y.data).map(|(p, q)| (*p as f64 - *q as f64).powi(2)).sum::<f64>();
        count += x.data.len();
    }
    if count == 0 {
        return Err(Error::Data("cannot compare empty videos".into()));
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (255.0f64 * 255.0 / mse).log10() })
}
