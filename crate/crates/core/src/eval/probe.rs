use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::roc_auc;
use crate::tensor::Tensor;
use crate::train::{ForgerySample, CROP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct ProbeConfig {
    /// Evenly spaced training frames taken from each training video.
    pub frames_per_video: usize,
    /// Average-pooling factor applied to the center 88x88 crop.
    pub pool: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { frames_per_video: 10, pool: 4, iterations: 300, learning_rate: 0.5, l2: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProbeReport {
    /// AUC with every test frame scored on its own.
    pub frame_auc: f64,
    /// AUC of per-video mean frame scores.
    pub video_auc: f64,
    pub train_frames: usize,
    pub test_frames: usize,
}

/// Pooled center-crop pixels of one frame of a `[F, H, W, 1]` video, on the 0..1 scale.
pub fn frame_features(frames: &Tensor, frame: usize, pool: usize) -> Result<Vec<f64>> {
    let (h, w) = match frames.shape() {
        &[_, h, w, 1] => (h, w),
        s => return Err(Error::Data(format!("expected [F, H, W, 1] frames, got {s:?}"))),
    };
    if pool == 0 || !CROP.is_multiple_of(pool) || h < CROP || w < CROP {
        return Err(Error::InvalidArgument(format!("cannot pool {h}x{w} frames by {pool}")));
    }
    let (top, left) = ((h - CROP) / 2, (w - CROP) / 2);
    let plane = &frames.data()[frame * h * w..(frame + 1) * h * w];
    let n = CROP / pool;
    let scale = 1.0 / (255.0 * (pool * pool) as f64);
    Ok((0..n * n)
        .map(|k| {
            let (by, bx) = (k / n, k % n);
            let mut acc = 0.0;
            for y in 0..pool {
                let row = (top + by * pool + y) * w + left + bx * pool;
                acc += plane[row..row + pool].iter().map(|&v| v as f64).sum::<f64>();
            }
            acc * scale
        })
        .collect())
}



struct Logistic {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl Logistic {
    fn fit(x: &[Vec<f64>], y: &[f64], cfg: &ProbeConfig) -> Self {
        let (n, d) = (x.len() as f64, x[0].len());
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let inv_std: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 }
            })
            .collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..d).map(|j| (r[j] - mean[j]) * inv_std[j]).collect()).collect();
        let mut model = Logistic { mean, inv_std, weights: vec![0.0; d], bias: 0.0 };
        for _ in 0..cfg.iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &t) in z.iter().zip(y) {
                let p = model.prob_standardized(row);
                let e = p - t;
                gb += e;
                gw.iter_mut().zip(row).for_each(|(g, v)| *g += e * v);
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= cfg.learning_rate * (g / n + cfg.l2 * *w);
            }
            model.bias -= cfg.learning_rate * gb / n;
        }
        model
    }

    fn prob_standardized(&self, z: &[f64]) -> f64 {
        let s: f64 = self.bias + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
        1.0 / (1.0 + (-s).exp())
    }

    fn prob(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().enumerate().map(|(j, v)| (v - self.mean[j]) * self.inv_std[j]).collect();
        self.prob_standardized(&z)
    }
}

/// Single-frame logistic-regression detector: trains on individual frames and scores
/// test frames independently, so it can only exploit per-frame appearance.
pub fn frame_probe(train: &[ForgerySample], test: &[ForgerySample], cfg: &ProbeConfig) -> Result<ProbeReport> {
    if train.is_empty() || test.is_empty() || cfg.frames_per_video == 0 {
        return Err(Error::Data("probe needs training and test videos".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for v in train {
        let f = v.frames.shape()[0];
        let k = cfg.frames_per_video.min(f);
        for i in 0..k {
            x.push(frame_features(&v.frames, i * f / k, cfg.pool)?);
            y.push(v.label as f64);
        }
    }
    if !y.contains(&0.0) || !y.contains(&1.0) {
        return Err(Error::Data("probe training set needs both classes".into()));
    }
    let model = Logistic::fit(&x, &y, cfg);
    let (mut frame_scores, mut frame_labels) = (Vec::new(), Vec::new());
    let mut video_scores = Vec::with_capacity(test.len());
    for v in test {
        let f = v.frames.shape()[0];
        let mut total = 0.0;
        for i in 0..f {
            let p = model.prob(&frame_features(&v.frames, i, cfg.pool)?);
            frame_scores.push(p);
            frame_labels.push(v.label);
            total += p;
        }
        video_scores.push(total / f as f64);
    }
    let video_labels: Vec<u8> = test.iter().map(|v| v.label).collect();
    Ok(ProbeReport {
        frame_auc: roc_auc(&frame_scores, &frame_labels)?.auc,
        video_auc: roc_auc(&video_scores, &video_labels)?.auc,
        train_frames: x.len(),
        test_frames: frame_scores.len(),
    })
}
