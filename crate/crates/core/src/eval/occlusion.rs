use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::scoring::ClipModel;
use crate::nn::Normalization;
use crate::preprocess::{quantize, save_frame_png, Frame};
use crate::tensor::Tensor;

pub const DEFAULT_BLOCK: usize = 40;
/// Raw gray level of the occluder, half of full scale.
pub const OCCLUSION_GRAY: f32 = 127.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OcclusionMap {
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    /// Fill value in network-input units.
    pub occlusion_value: f32,
    /// Number of occluded clips scored.
    pub forwards: usize,
    /// Mean correct-class probability over the blocks covering each pixel, row-major.
    pub mean_probability: Vec<f64>,
    /// `mean_probability` min-max scaled to `[0, 1]`; all zeros when the map is constant
    /// (up to summation rounding).
    pub heatmap: Vec<f64>,
}

impl OcclusionMap {
    pub fn argmin(&self) -> (usize, usize) {
        let i = self
            .heatmap
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (i / self.width, i % self.width)
    }

    /// 8-bit binary PGM of the normalised heatmap.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.heatmap.iter().map(|&v| quantize((v * 255.0) as f32)).collect();
        let mut buf = Vec::new();
        PnmEncoder::new(&mut buf)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, self.width as u32, self.height as u32, ExtendedColorType::L8)
            .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Heatmap colour-blended over a raw `[H, W]` grayscale frame, written as PNG.
    pub fn write_overlay(&self, path: impl AsRef<Path>, frame: &[f32]) -> Result<()> {
        if frame.len() != self.width * self.height {
            return Err(Error::shape(&[self.height, self.width], &[frame.len()]));
        }
        let data = frame
            .iter()
            .zip(&self.heatmap)
            .flat_map(|(&g, &h)| {
                let h = h as f32;
                let color = [255.0 * h, 255.0 * (1.0 - (2.0 * h - 1.0).abs()), 255.0 * (1.0 - h)];
                color.map(|c| 0.5 * g + 0.5 * c)
            })
            .collect();
        save_frame_png(path, &Frame::new(self.width, self.height, 3, data)?)
    }
}

/// Slides a `block x block x T` gray cuboid over a prepared `[T, S, S]` clip with stride 1
/// and records `model`'s probability for each placement.
pub fn occlusion_map(
    model: &dyn ClipModel,
    clip: &Tensor,
    block: usize,
    occlusion_value: f32,
    batch_size: usize,
) -> Result<OcclusionMap> {
    let (t, h, w) = match clip.shape() {
        &[t, h, w] => (t, h, w),
        s => return Err(Error::InvalidArgument(format!("occlusion needs a [T, S, S] clip, got {s:?}"))),
    };
    if block == 0 || block > h || block > w {
        return Err(Error::InvalidArgument(format!("block {block} does not fit a {h}x{w} frame")));
    }
    let (ny, nx) = (h - block + 1, w - block + 1);
    let positions: Vec<(usize, usize)> = (0..ny).flat_map(|y| (0..nx).map(move |x| (y, x))).collect();
    let mut probs = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(batch_size.max(1)) {
        let batch: Vec<Tensor> = chunk
            .iter()
            .map(|&(y0, x0)| {
                let mut c = clip.clone();
                let d = c.data_mut();
                for f in 0..t {
                    for y in y0..y0 + block {
                        let o = (f * h + y) * w + x0;
                        d[o..o + block].fill(occlusion_value);
                    }
                }
                c
            })
            .collect();
        let p = model.probabilities(&batch)?;
        if p.len() != batch.len() {
            return Err(Error::InvalidArgument(format!("model returned {} scores for {} clips", p.len(), batch.len())));
        }
        probs.extend(p);
    }
    // Summed-area accumulation of each placement's probability over the pixels it covers.
    let mut sum = vec![0.0f64; (h + 1) * (w + 1)];
    let mut cnt = vec![0i64; (h + 1) * (w + 1)];
    for (&(y, x), &p) in positions.iter().zip(&probs) {
        for (yy, xx, sign) in [(y, x, 1), (y, x + block, -1), (y + block, x, -1), (y + block, x + block, 1)] {
            sum[yy * (w + 1) + xx] += sign as f64 * p;
            cnt[yy * (w + 1) + xx] += sign;
        }
    }
    for y in 0..=h {
        for x in 1..=w {
            sum[y * (w + 1) + x] += sum[y * (w + 1) + x - 1];
            cnt[y * (w + 1) + x] += cnt[y * (w + 1) + x - 1];
        }
    }
    for y in 1..=h {
        for x in 0..=w {
            sum[y * (w + 1) + x] += sum[(y - 1) * (w + 1) + x];
            cnt[y * (w + 1) + x] += cnt[(y - 1) * (w + 1) + x];
        }
    }
    let mean: Vec<f64> =
        (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).map(|(y, x)| {
            let i = y * (w + 1) + x;
            sum[i] / cnt[i] as f64
        }).collect();
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let flat = hi - lo <= 1e-12 * hi.abs().max(1.0);
    let heatmap = if !flat { mean.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect() } else { vec![0.0; h * w] };
    Ok(OcclusionMap {
        width: w,
        height: h,
        block_size: block,
        occlusion_value,
        forwards: probs.len(),
        mean_probability: mean,
        heatmap,
    })
}

/// The occluder value in network-input units for a given normalisation.
pub fn occlusion_fill(norm: &Normalization) -> f32 {
    norm.apply(OCCLUSION_GRAY)
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::tensor::sigmoid;

    struct Planted {
        calls: Cell<usize>,
        at: (usize, usize),
        size: usize,
    }

    impl ClipModel for Planted {
        fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>> {
            self.calls.set(self.calls.get() + clips.len());
            let s = self.size;
            Ok(clips
                .iter()
                .map(|c| {
                    let t = c.shape()[0];
                    let v: f32 = (0..t).map(|f| c.data()[(f * s + self.at.0) * s + self.at.1]).sum::<f32>() / t as f32;
                    sigmoid(4.0 * (v - 0.5)) as f64
                })
                .collect())
        }
    }

    struct Flat;

    impl ClipModel for Flat {
        fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>> {
            Ok(vec![0.7; clips.len()])
        }
    }

    #[test]
    fn planted_pixel_detector() {
        let model = Planted { calls: Cell::new(0), at: (44, 44), size: 88 };
        let clip = Tensor::full(&[2, 88, 88], 2.0);
        let map = occlusion_map(&model, &clip, 40, 0.0, 64).unwrap();
        assert_eq!(model.calls.get(), 2401);
        assert_eq!(map.forwards, 2401);
        assert_eq!(map.heatmap.len(), 88 * 88);
        assert!(map.heatmap.iter().all(|v| (0.0..=1.0).contains(v)));
        let (y, x) = map.argmin();
        assert!(y.abs_diff(44).max(x.abs_diff(44)) <= 39);
        assert_eq!(map.heatmap[44 * 88 + 44], 0.0);
    }

    #[test]
    fn constant_model_gives_zero_map() {
        let clip = Tensor::zeros(&[1, 12, 12]);
        let map = occlusion_map(&Flat, &clip, 5, 0.0, 7).unwrap();
        assert_eq!(map.forwards, 64);
        assert!(map.heatmap.iter().all(|&v| v == 0.0));
        assert!(occlusion_map(&Flat, &clip, 13, 0.0, 7).is_err());
    }

    #[test]
    fn heatmap_files() {
        let dir = tempfile::tempdir().unwrap();
        let model = Planted { calls: Cell::new(0), at: (3, 3), size: 8 };
        let map = occlusion_map(&model, &Tensor::full(&[1, 8, 8], 1.0), 3, 0.0, 10).unwrap();
        map.write_pgm(dir.path().join("h.pgm")).unwrap();
        let bytes = std::fs::read(dir.path().join("h.pgm")).unwrap();
        assert!(bytes.starts_with(b"P5"));
        map.write_overlay(dir.path().join("h.png"), &[100.0; 64]).unwrap();
        assert!(map.write_overlay(dir.path().join("x.png"), &[0.0; 3]).is_err());
    }
}
