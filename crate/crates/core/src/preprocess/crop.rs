use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::align::{estimate_similarity, MeanFace, Similarity, CANONICAL_SIZE};
use crate::preprocess::landmarks::{alignment_points, mouth_center, smooth_landmarks, LandmarkTrack, Point};
use crate::tensor::Tensor;

pub const CROP_SIZE: usize = 96;
pub const SMOOTHING_WINDOW: usize = 12;

/// Interleaved image with `channels` samples per pixel, values on the 0..255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 || data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height}x{channels} cannot hold {} samples",
                data.len()
            )));
        }
        Ok(Frame { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Frame { width, height, channels, data: vec![value; width * height * channels] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    /// Bilinear sample at `(x, y)`; taps outside the image contribute 0.
    #[inline]
    pub fn sample(&self, x: f64, y: f64, out: &mut [f32]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let (w, h) = (self.width as i64, self.height as i64);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let yy = y0 + dy;
            if wy == 0.0 || yy < 0 || yy >= h {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let xx = x0 + dx;
                if wx == 0.0 || xx < 0 || xx >= w {
                    continue;
                }
                let p = self.pixel(xx as usize, yy as usize);
                let wgt = wx * wy;
                for (o, &v) in out.iter_mut().zip(p) {
                    *o += wgt * v;
                }
            }
        }
    }
}

/// BT.601 luma.
#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) as f32
}

fn gray_of(pixel: &[f32]) -> f32 {
    match pixel.len() {
        1 => pixel[0],
        _ => luma(pixel[0], pixel[1], pixel[2]),
    }
}

/// Resamples `frame` into a `width x height` canvas; `transform` maps source to output coordinates.
pub fn warp_frame(frame: &Frame, transform: &Similarity, width: usize, height: usize) -> Result<Frame> {
    let inv = transform.inverse()?;
    let c = frame.channels;
    let mut out = Frame::filled(width, height, c, 0.0);
    for y in 0..height {
        for x in 0..width {
            let [sx, sy] = inv.apply([x as f64, y as f64]);
            let o = (y * width + x) * c;
            frame.sample(sx, sy, &mut out.data[o..o + c]);
        }
    }
    Ok(out)
}

fn crop_origin(landmarks: &[Point]) -> (i64, i64) {
    let [cx, cy] = mouth_center(landmarks);
    let half = (CROP_SIZE / 2) as i64;
    (cx.round() as i64 - half, cy.round() as i64 - half)
}

/// 96x96 grayscale window `[c - 48, c + 48)` around the mean mouth landmark, zero outside the image.
pub fn crop_mouth(warped: &Frame, landmarks: &[Point]) -> Vec<f32> {
    let (x0, y0) = crop_origin(landmarks);
    let mut out = vec![0.0; CROP_SIZE * CROP_SIZE];
    for i in 0..CROP_SIZE {
        let y = y0 + i as i64;
        if y < 0 || y >= warped.height as i64 {
            continue;
        }
        for j in 0..CROP_SIZE {
            let x = x0 + j as i64;
            if x >= 0 && x < warped.width as i64 {
                out[i * CROP_SIZE + j] = gray_of(warped.pixel(x as usize, y as usize));
            }
        }
    }
    out
}

/// Start frames of consecutive `length`-frame windows taken every `stride` frames; the remainder is dropped.
pub fn clip_starts(frames: usize, length: usize, stride: usize) -> Vec<usize> {
    if length == 0 || stride == 0 || frames < length {
        return Vec::new();
    }
    (0..=frames - length).step_by(stride).collect()
}

/// Cuts `[F, H, W, C]` frames into `[T, H, W, C]` clips.
pub fn make_clips(frames: &Tensor, length: usize, stride: usize) -> Result<Vec<Tensor>> {
    if frames.rank() != 4 {
        return Err(Error::InvalidShape { shape: frames.shape().to_vec(), reason: "expected [F, H, W, C]".into() });
    }
    if length == 0 || stride == 0 {
        return Err(Error::InvalidArgument("clip length and stride must be positive".into()));
    }
    let per_frame: usize = frames.shape()[1..].iter().product();
    let mut shape = frames.shape().to_vec();
    shape[0] = length;
    Ok(clip_starts(frames.shape()[0], length, stride)
        .into_iter()
        .map(|s| {
            let data = frames.data()[s * per_frame..(s + length) * per_frame].to_vec();
            Tensor::from_parts(shape.clone(), data)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct PreprocessConfig {
    pub smoothing_window: usize,
    pub mean_face: MeanFace,
    /// Extra uniform scale composed after the alignment transform; the canonical frame grows with it.
    pub resize_scale: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { smoothing_window: SMOOTHING_WINDOW, mean_face: MeanFace::default(), resize_scale: 1.0 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 {
            return Err(Error::Config("smoothingWindow must be positive".into()));
        }
        if !(self.resize_scale.is_finite() && self.resize_scale > 0.0) {
            return Err(Error::Config("resizeScale must be positive".into()));
        }
        let p = &self.mean_face.points;
        if p.iter().flatten().any(|v| !v.is_finite()) || p[0][0] >= p[1][0] {
            return Err(Error::Config("mean face needs finite points with left eye x < right eye x".into()));
        }
        Ok(())
    }

    pub fn canonical_size(&self) -> usize {
        (CANONICAL_SIZE as f64 * self.resize_scale).round() as usize
    }

    /// Source-to-canonical transform for one frame's (smoothed) landmarks.
    pub fn alignment(&self, landmarks: &[Point]) -> Result<Similarity> {
        let s = estimate_similarity(&alignment_points(landmarks), &self.mean_face.points)?;
        let resize = Similarity { a: self.resize_scale, b: 0.0, tx: 0.0, ty: 0.0 };
        Ok(resize.compose(&s))
    }
}

/// Full per-video pipeline: smooth, align, warp and crop. Returns `[F, 96, 96, 1]` luma frames.
///
/// Only the crop window of each warped frame is resampled; the result equals
/// `crop_mouth(warp_frame(..))` on the full canonical canvas.
pub fn preprocess_video(frames: &[Frame], track: &LandmarkTrack, cfg: &PreprocessConfig) -> Result<Tensor> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Data("video has no frames".into()));
    }
    if frames.len() != track.len() {
        return Err(Error::Data(format!("{} frames but {} landmark frames", frames.len(), track.len())));
    }
    let smoothed = smooth_landmarks(track, cfg.smoothing_window);
    let canvas = cfg.canonical_size() as i64;
    let plane = CROP_SIZE * CROP_SIZE;
    let mut data = vec![0.0f32; frames.len() * plane];
    let mut px = [0.0f32; 4];
    for (f, (frame, lm)) in frames.iter().zip(smoothed.frames()).enumerate() {
        if frame.channels != 1 && frame.channels != 3 {
            return Err(Error::Data(format!("frame {f} has {} channels", frame.channels)));
        }
        let s = cfg.alignment(lm)?;
        let inv = s.inverse()?;
        let warped: Vec<Point> = lm.iter().map(|&p| s.apply(p)).collect();
        let (x0, y0) = crop_origin(&warped);
        let out = &mut data[f * plane..(f + 1) * plane];
        let sample = &mut px[..frame.channels];
        for i in 0..CROP_SIZE {
            let y = y0 + i as i64;
            if y < 0 || y >= canvas {
                continue;
            }
            for j in 0..CROP_SIZE {
                let x = x0 + j as i64;
                if x < 0 || x >= canvas {
                    continue;
                }
                let [sx, sy] = inv.apply([x as f64, y as f64]);
                frame.sample(sx, sy, sample);
                out[i * CROP_SIZE + j] = gray_of(sample);
            }
        }
    }
    Tensor::new(vec![frames.len(), CROP_SIZE, CROP_SIZE, 1], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::landmarks::NUM_LANDMARKS;

    fn ramp(w: usize, h: usize) -> Frame {
        let data = (0..w * h * 3).map(|i| ((i * 37) % 251) as f32).collect();
        Frame::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn identity_warp_is_exact() {
        let f = ramp(20, 14);
        assert_eq!(warp_frame(&f, &Similarity::IDENTITY, 20, 14).unwrap(), f);
    }

    #[test]
    fn unit_translation_shifts_columns() {
        let f = ramp(20, 14);
        let t = Similarity { tx: 1.0, ..Similarity::IDENTITY };
        let w = warp_frame(&f, &t, 20, 14).unwrap();
        for y in 0..14 {
            assert_eq!(w.pixel(0, y), &[0.0; 3]);
            for x in 1..20 {
                assert_eq!(w.pixel(x, y), f.pixel(x - 1, y));
            }
        }
    }

    #[test]
    fn constant_image_stays_constant_in_bounds() {
        let f = Frame::filled(40, 40, 3, 77.0);
        let t = Similarity::from_parts(1.3, 0.4, -3.0, 2.0);
        let w = warp_frame(&f, &t, 40, 40).unwrap();
        let inv = t.inverse().unwrap();
        for y in 0..40 {
            for x in 0..40 {
                let [sx, sy] = inv.apply([x as f64, y as f64]);
                if sx >= 0.0 && sy >= 0.0 && sx <= 39.0 && sy <= 39.0 {
                    assert!((w.pixel(x, y)[0] - 77.0).abs() < 1e-3);
                }
            }
        }
    }

    fn mouth_at(c: Point) -> Vec<Point> {
        let mut lm = vec![[0.0, 0.0]; NUM_LANDMARKS];
        for (k, p) in lm[48..68].iter_mut().enumerate() {
            let ang = k as f64 * std::f64::consts::TAU / 20.0;
            *p = [c[0] + 10.0 * ang.cos(), c[1] + 5.0 * ang.sin()];
        }
        lm
    }

    #[test]
    fn crop_window_is_centered_on_mouth() {
        let mut f = Frame::filled(256, 256, 3, 0.0);
        for y in 0..256 {
            for x in 0..256 {
                let v = (x + 1000 * y) as f32;
                f.data[(y * 256 + x) * 3..(y * 256 + x) * 3 + 3].copy_from_slice(&[v, v, v]);
            }
        }
        let crop = crop_mouth(&f, &mouth_at([128.0, 196.0]));
        assert_eq!(crop[0], (80 + 1000 * 148) as f32);
        assert_eq!(crop[CROP_SIZE * CROP_SIZE - 1], (175 + 1000 * 243) as f32);
    }

    #[test]
    fn crop_pads_with_zero_and_applies_luma() {
        let gray = Frame::filled(64, 64, 3, 90.0);
        let crop = crop_mouth(&gray, &mouth_at([10.0, 10.0]));
        assert_eq!(crop[0], 0.0);
        assert_eq!(crop[60 * CROP_SIZE + 60], 90.0);
        let red = Frame::new(1, 1, 3, vec![255.0, 0.0, 0.0]).unwrap();
        let crop = crop_mouth(&red, &mouth_at([0.0, 0.0]));
        assert!((crop[48 * CROP_SIZE + 48] - 0.299 * 255.0).abs() < 1e-4);
        assert!((crop[48 * CROP_SIZE + 48] - 76.2).abs() < 0.05);
    }

    #[test]
    fn clip_counts() {
        assert_eq!(clip_starts(110, 25, 25), vec![0, 25, 50, 75]);
        assert!(clip_starts(24, 25, 25).is_empty());
        assert_eq!(clip_starts(25, 25, 25), vec![0]);
        let frames = Tensor::new(vec![26, 2, 2, 1], (0..104).map(|v| v as f32).collect()).unwrap();
        let clips = make_clips(&frames, 25, 25).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].shape(), &[25, 2, 2, 1]);
        assert_eq!(make_clips(&frames, 5, 3).unwrap()[2].data()[0], 24.0);
    }
}
