//! Procedural face renderer in the canonical 256x256 frame.
//!
//! The mouth is two concentric ellipses (lips and cavity). Ellipse coverage is
//! integrated exactly along the vertical axis of each pixel footprint, so
//! rendered intensities vary continuously with aperture and width.

use crate::preprocess::{luma, Frame, Point, Similarity, NUM_LANDMARKS};
use crate::tensor::Rng;

pub const MOUTH_CENTER: Point = [128.0, 196.0];
pub const MOUTH_HALF_WIDTH: f64 = 34.0;
/// Cavity half-height at full aperture.
pub const APERTURE_HEIGHT: f64 = 14.0;
pub const LIP_THICKNESS: f64 = 9.0;
const CAVITY_WIDTH: f64 = 0.78;
const FACE_CENTER: Point = [128.0, 130.0];
const FACE_HALF: [f64; 2] = [104.0, 124.0];
const EYE_CENTERS: [Point; 2] = [[88.0, 110.0], [168.0, 110.0]];
const NOSTRILS: [Point; 2] = [[119.0, 161.0], [137.0, 161.0]];
const BACKGROUND: [f32; 3] = [70.0, 80.0, 95.0];
const CAVITY: [f32; 3] = [35.0, 18.0, 22.0];
const EYE: [f32; 3] = [40.0, 30.0, 30.0];
const NOSTRIL: [f32; 3] = [70.0, 45.0, 45.0];
pub const PIXEL_NOISE: f32 = 4.0;

/// Per-frame mouth shape: `aperture` in `[0, 1]`, multiplicative width and height factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MouthState {
    pub aperture: f64,
    pub width: f64,
    pub height: f64,
}

impl MouthState {
    pub fn open(aperture: f64) -> Self {
        MouthState { aperture, width: 1.0, height: 1.0 }
    }

    fn half_width(&self, app: &Appearance) -> f64 {
        MOUTH_HALF_WIDTH * app.mouth_scale * self.width
    }

    fn cavity_height(&self, app: &Appearance) -> f64 {
        APERTURE_HEIGHT * app.mouth_scale * (self.aperture * self.height).max(0.0)
    }
}

/// Per-identity look: skin tone, lip tint, mouth size and a low-frequency skin texture.
#[derive(Clone, Debug, PartialEq)]
pub struct Appearance {
    pub skin: [f32; 3],
    pub lip: [f32; 3],
    pub mouth_scale: f64,
    /// `(kx, ky, phase, amplitude)` plane waves modulating skin brightness.
    pub texture: [(f64, f64, f64, f64); 3],
}

impl Appearance {
    pub fn sample(rng: &mut Rng) -> Self {
        let b = rng.uniform_range(130.0, 200.0);
        let lip = rng.uniform_range(0.66, 0.78);
        let mouth_scale = rng.uniform_range(0.92, 1.08) as f64;
        let texture = std::array::from_fn(|_| {
            let angle = rng.uniform_range(0.0, std::f32::consts::TAU) as f64;
            let wavelength = rng.uniform_range(20.0, 60.0) as f64;
            let k = std::f64::consts::TAU / wavelength;
            let phase = rng.uniform_range(0.0, std::f32::consts::TAU) as f64;
            (k * angle.cos(), k * angle.sin(), phase, rng.uniform_range(0.01, 0.03) as f64)
        });
        Appearance { skin: [b, 0.78 * b, 0.66 * b], lip: [lip * b, 0.42 * b, 0.42 * b], mouth_scale, texture }
    }

    fn skin_at(&self, x: f64, y: f64) -> [f32; 3] {
        let t: f64 = self.texture.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum();
        let m = (1.0 + t) as f32;
        [self.skin[0] * m, self.skin[1] * m, self.skin[2] * m]
    }
}

/// Fraction of the vertical footprint `[y - half, y + half]` at column `x` inside the ellipse.
#[inline]
fn ellipse_coverage(x: f64, y: f64, c: Point, a: f64, b: f64, half: f64) -> f32 {
    let dx = (x - c[0]) / a;
    if b <= 0.0 || dx.abs() >= 1.0 {
        return 0.0;
    }
    let h = b * (1.0 - dx * dx).sqrt();
    let lo = (y - half).max(c[1] - h);
    let hi = (y + half).min(c[1] + h);
    ((hi - lo).max(0.0) / (2.0 * half)) as f32
}

#[inline]
fn mix(base: [f32; 3], over: [f32; 3], t: f32) -> [f32; 3] {
    if t <= 0.0 {
        return base;
    }
    std::array::from_fn(|i| base[i] + t * (over[i] - base[i]))
}

/// Face without the mouth: skin texture, eyes and nostrils, or background outside the face.
fn shade_static(app: &Appearance, x: f64, y: f64, half: f64) -> [f32; 3] {
    let fx = (x - FACE_CENTER[0]) / FACE_HALF[0];
    let fy = (y - FACE_CENTER[1]) / FACE_HALF[1];
    if fx * fx + fy * fy > 1.0 {
        return BACKGROUND;
    }
    let mut c = app.skin_at(x, y);
    for e in EYE_CENTERS {
        c = mix(c, EYE, ellipse_coverage(x, y, e, 14.0, 6.0, half));
    }
    for n in NOSTRILS {
        c = mix(c, NOSTRIL, ellipse_coverage(x, y, n, 4.5, 3.0, half));
    }
    c
}

/// Lips and cavity composited over `base`.
fn shade_mouth(base: [f32; 3], app: &Appearance, state: &MouthState, x: f64, y: f64, half: f64) -> [f32; 3] {
    let w = state.half_width(app);
    let cavity = state.cavity_height(app);
    let lips = cavity + LIP_THICKNESS * app.mouth_scale;
    let c = mix(base, app.lip, ellipse_coverage(x, y, MOUTH_CENTER, w, lips, half));
    mix(c, CAVITY, ellipse_coverage(x, y, MOUTH_CENTER, CAVITY_WIDTH * w, cavity, half))
}

/// Noise-free RGB at canonical point `(x, y)` for a pixel footprint of height `2 * half`.
pub fn shade(app: &Appearance, state: &MouthState, x: f64, y: f64, half: f64) -> [f32; 3] {
    shade_mouth(shade_static(app, x, y, half), app, state, x, y, half)
}

/// Grayscale `size x size` patch whose top-left pixel sits at canonical `origin`, plus pixel noise.
pub fn render_patch(app: &Appearance, state: &MouthState, origin: [i64; 2], size: usize, noise: &mut Rng) -> Vec<f32> {
    let base = static_patch(app, origin, size);
    mouth_patch(&base, app, state, origin, size, noise)
}

/// Noise-free RGB of the mouthless face over a patch; shared by every frame of a video.
pub fn static_patch(app: &Appearance, origin: [i64; 2], size: usize) -> Vec<[f32; 3]> {
    (0..size * size)
        .map(|k| {
            let (i, j) = (k / size, k % size);
            shade_static(app, (origin[0] + j as i64) as f64, (origin[1] + i as i64) as f64, 0.5)
        })
        .collect()
}

/// One frame of a patch: the mouth is drawn over `base` inside its bounding box, then noise is added.
pub fn mouth_patch(
    base: &[[f32; 3]],
    app: &Appearance,
    state: &MouthState,
    origin: [i64; 2],
    size: usize,
    noise: &mut Rng,
) -> Vec<f32> {
    let reach_x = state.half_width(app) + 1.0;
    let reach_y = state.cavity_height(app) + LIP_THICKNESS * app.mouth_scale + 1.0;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let y = (origin[1] + i as i64) as f64;
        let near_y = (y - MOUTH_CENTER[1]).abs() < reach_y;
        for j in 0..size {
            let x = (origin[0] + j as i64) as f64;
            let mut c = base[i * size + j];
            if near_y && (x - MOUTH_CENTER[0]).abs() < reach_x {
                c = shade_mouth(c, app, state, x, y, 0.5);
            }
            out.push(luma(c[0], c[1], c[2]) + noise.normal(0.0, PIXEL_NOISE));
        }
    }
    out
}

/// RGB frame of the face placed by `pose` (canonical to image coordinates), plus optional pixel noise.
pub fn render_frame(
    app: &Appearance,
    state: &MouthState,
    pose: &Similarity,
    width: usize,
    height: usize,
    mut noise: Option<&mut Rng>,
) -> Frame {
    let inv = pose.inverse().expect("pose has positive scale");
    let half = 0.5 / pose.scale();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let [cx, cy] = inv.apply([x as f64, y as f64]);
            for v in shade(app, state, cx, cy, half) {
                data.push(match noise.as_deref_mut() {
                    Some(rng) => v + rng.normal(0.0, PIXEL_NOISE),
                    None => v,
                });
            }
        }
    }
    Frame { width, height, channels: 3, data }
}

fn ring(out: &mut [Point], center: Point, a: f64, b: f64, start: f64) {
    let n = out.len() as f64;
    for (k, p) in out.iter_mut().enumerate() {
        let t = start + k as f64 * std::f64::consts::TAU / n;
        *p = [center[0] + a * t.cos(), center[1] + b * t.sin()];
    }
}

/// 68-point landmarks of the rendered face in canonical coordinates.
///
/// Lip contours are sampled at equally spaced angles, so their mean is the mouth center for any shape.
pub fn canonical_landmarks(app: &Appearance, state: &MouthState) -> Vec<Point> {
    let mut p = vec![[0.0, 0.0]; NUM_LANDMARKS];
    for (k, q) in p[0..17].iter_mut().enumerate() {
        let t = std::f64::consts::PI * (1.0 - k as f64 / 16.0);
        *q = [FACE_CENTER[0] + 98.0 * t.cos(), FACE_CENTER[1] + 112.0 * t.sin()];
    }
    for k in 0..5 {
        let dx = 13.0 * k as f64;
        let arc = [2.0, 5.0, 6.0, 5.0, 2.0][k];
        p[17 + k] = [62.0 + dx, 94.0 - arc];
        p[22 + k] = [142.0 + dx, 94.0 - arc];
    }
    p[27..31].copy_from_slice(&[[128.0, 116.0], [128.0, 128.0], [128.0, 139.0], [128.0, 150.0]]);
    p[31..36].copy_from_slice(&[[114.0, 160.0], [121.0, 162.0], [128.0, 162.0], [135.0, 162.0], [142.0, 160.0]]);
    let eye = [[-14.0, 0.0], [-5.0, -5.0], [5.0, -5.0], [14.0, 0.0], [5.0, 5.0], [-5.0, 5.0]];
    for (e, c) in EYE_CENTERS.iter().enumerate() {
        for (k, d) in eye.iter().enumerate() {
            p[36 + 6 * e + k] = [c[0] + d[0], c[1] + d[1]];
        }
    }
    let w = state.half_width(app);
    let cavity = state.cavity_height(app);
    ring(&mut p[48..60], MOUTH_CENTER, w, cavity + LIP_THICKNESS * app.mouth_scale, std::f64::consts::PI);
    ring(&mut p[60..68], MOUTH_CENTER, CAVITY_WIDTH * w, cavity, std::f64::consts::PI);
    p
}
