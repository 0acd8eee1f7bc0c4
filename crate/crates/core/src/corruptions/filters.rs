//! Per-plane image filters on `f64` samples.

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Normalised taps `exp(-k² / 2σ²)` for `k` in `[-r, r]`, `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur of a `w x h` plane with reflect padding.
pub fn gaussian_blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = k.iter().enumerate().map(|(j, t)| t * row[reflect(x as i64 + j as i64 - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                k.iter().enumerate().map(|(j, t)| t * tmp[reflect(y as i64 + j as i64 - r, h) * w + x]).sum();
        }
    }
    out
}

/// Area-average downscale to `sw x sh`, then nearest-neighbour upscale back to `w x h`.
pub fn pixelate(plane: &[f64], w: usize, h: usize, sw: usize, sh: usize) -> Vec<f64> {
    let weights = |n: usize, m: usize| -> Vec<Vec<(usize, f64)>> {
        let step = n as f64 / m as f64;
        (0..m)
            .map(|i| {
                let (lo, hi) = (i as f64 * step, (i + 1) as f64 * step);
                (lo.floor() as usize..(hi.ceil() as usize).min(n))
                    .map(|p| (p, ((p + 1) as f64).min(hi) - (p as f64).max(lo)))
                    .filter(|&(_, wt)| wt > 0.0)
                    .collect()
            })
            .collect()
    };
    let (wx, wy) = (weights(w, sw), weights(h, sh));
    let mut small = vec![0.0; sw * sh];
    for (j, ry) in wy.iter().enumerate() {
        for (i, rx) in wx.iter().enumerate() {
            let (mut acc, mut area) = (0.0, 0.0);
            for &(y, ty) in ry {
                for &(x, tx) in rx {
                    acc += ty * tx * plane[y * w + x];
                    area += ty * tx;
                }
            }
            small[j * sw + i] = acc / area;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let sy = ((y as f64 + 0.5) * sh as f64 / h as f64) as usize;
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * sw as f64 / w as f64) as usize;
            out[y * w + x] = small[sy.min(sh - 1) * sw + sx.min(sw - 1)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn blurred_impulse_is_outer_product_of_kernel() {
        let (w, h) = (41, 41);
        let mut plane = vec![0.0; w * h];
        plane[20 * w + 20] = 1.0;
        let sigma = 2.0;
        let out = gaussian_blur(&plane, w, h, sigma);
        // Independent oracle: continuous Gaussian sampled on the 13-tap support, normalised.
        let g: Vec<f64> = (-6..=6).map(|k: i32| (-(k * k) as f64 / 8.0).exp()).collect();
        let z: f64 = g.iter().sum();
        assert_eq!(gaussian_kernel(sigma).len(), 13);
        for dy in -6..=6i32 {
            for dx in -6..=6i32 {
                let expected = g[(dy + 6) as usize] * g[(dx + 6) as usize] / (z * z);
                let got = out[(20 + dy) as usize * w + (20 + dx) as usize];
                assert!((got - expected).abs() < 1e-15);
            }
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pixelate_averages_blocks() {
        let plane: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let out = pixelate(&plane, 4, 4, 2, 2);
        assert_eq!(out[0], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(out[1], out[0]);
        assert_eq!(out[15], (10.0 + 11.0 + 14.0 + 15.0) / 4.0);
        let same = pixelate(&plane, 4, 4, 4, 4);
        assert_eq!(same, plane);
    }
}
