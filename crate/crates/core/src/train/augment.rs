use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Side of the square network input cut from each mouth crop.
pub const CROP: usize = 88;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct AugmentConfig {
    pub random_crop: bool,
    pub horizontal_flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { random_crop: true, horizontal_flip: true }
    }
}

fn dims(clip: &Tensor) -> Result<(usize, usize, usize)> {
    match clip.shape() {
        &[t, h, w, 1] => Ok((t, h, w)),
        s => Err(Error::InvalidArgument(format!("clip must be [T, H, W, 1], got {s:?}"))),
    }
}

/// The `size x size` window at `(top, left)` of every frame.
pub fn crop(clip: &Tensor, top: usize, left: usize, size: usize) -> Result<Tensor> {
    let (t, h, w) = dims(clip)?;
    if top + size > h || left + size > w {
        return Err(Error::InvalidArgument(format!("crop {size} at ({top}, {left}) exceeds {h}x{w} frames")));
    }
    let mut out = Vec::with_capacity(t * size * size);
    for f in 0..t {
        for y in top..top + size {
            let row = (f * h + y) * w;
            out.extend_from_slice(&clip.data()[row + left..row + left + size]);
        }
    }
    Tensor::new(vec![t, size, size, 1], out)
}

pub fn flip_horizontal(clip: &Tensor) -> Result<Tensor> {
    let (_, _, w) = dims(clip)?;
    let mut out = clip.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    Ok(out)
}

/// Center `CROP` offsets for an `h x w` frame.
pub fn center_offsets(h: usize, w: usize) -> (usize, usize) {
    ((h - CROP) / 2, (w - CROP) / 2)
}

/// Train: one random window shared by all frames, then a whole-clip flip with p = 0.5.
/// Eval: the center window.
pub fn augment(clip: &Tensor, rng: &mut Rng, train: bool) -> Result<Tensor> {
    augment_with(clip, rng, train, &AugmentConfig::default())
}

pub fn augment_with(clip: &Tensor, rng: &mut Rng, train: bool, cfg: &AugmentConfig) -> Result<Tensor> {
    let (_, h, w) = dims(clip)?;
    if h < CROP || w < CROP {
        return Err(Error::InvalidArgument(format!("frames {h}x{w} are smaller than the {CROP} crop")));
    }
    let (top, left) = if train && cfg.random_crop {
        (rng.below(h - CROP + 1), rng.below(w - CROP + 1))
    } else {
        center_offsets(h, w)
    };
    let out = crop(clip, top, left, CROP)?;
    if train && cfg.horizontal_flip && rng.bernoulli(0.5) {
        flip_horizontal(&out)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize) -> Tensor {
        let data = (0..t * 96 * 96).map(|i| (i % 9216) as f32).collect();
        Tensor::new(vec![t, 96, 96, 1], data).unwrap()
    }

    #[test]
    fn eval_is_the_center_crop() {
        let clip = ramp(2);
        let out = augment(&clip, &mut Rng::new(0), false).unwrap();
        assert_eq!(out.shape(), &[2, 88, 88, 1]);
        assert_eq!(out.data()[0], (4 * 96 + 4) as f32);
        assert_eq!(center_offsets(96, 96), (4, 4));
    }

    #[test]
    fn flip_is_an_involution() {
        let clip = ramp(1);
        assert_eq!(flip_horizontal(&flip_horizontal(&clip).unwrap()).unwrap(), clip);
        assert_ne!(flip_horizontal(&clip).unwrap(), clip);
    }

    #[test]
    fn train_offsets_are_uniform_over_the_margin() {
        // Oracle: 81 equally likely offsets, each expected 10^4 / 81 times.
        let clip = ramp(1);
        let mut rng = Rng::new(7);
        let mut hist = [[0usize; 9]; 9];
        let cfg = AugmentConfig { random_crop: true, horizontal_flip: false };
        for _ in 0..10_000 {
            let out = augment_with(&clip, &mut rng, true, &cfg).unwrap();
            let v = out.data()[0] as usize;
            hist[v / 96][v % 96] += 1;
        }
        let expected = 10_000.0 / 81.0;
        let chi2: f64 = hist.iter().flatten().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 80 degrees of freedom: the 99.9% quantile is about 124.8.
        assert!(chi2 < 124.8, "chi2 {chi2}");
    }

    #[test]
    fn frames_share_one_window() {
        let clip = ramp(3);
        let out = augment(&clip, &mut Rng::new(3), true).unwrap();
        let plane = 88 * 88;
        assert_eq!(&out.data()[..plane], &out.data()[plane..2 * plane]);
    }

    #[test]
    fn small_frames_rejected() {
        assert!(augment(&Tensor::zeros(&[1, 80, 96, 1]), &mut Rng::new(0), false).is_err());
    }
}
