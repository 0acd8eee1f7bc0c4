use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::landmarks::Point;

/// Side of the canonical face frame the mean face lives in.
pub const CANONICAL_SIZE: usize = 256;

/// Five reference points (left eye, right eye, nose 28, 30, 33) in the canonical frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFace {
    pub points: [Point; 5],
}

impl Default for MeanFace {
    fn default() -> Self {
        MeanFace { points: [[88.0, 110.0], [168.0, 110.0], [128.0, 128.0], [128.0, 150.0], [128.0, 162.0]] }
    }
}

/// `x' = a x - b y + tx`, `y' = b x + a y + ty`: rotation, uniform scale and translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity { a: 1.0, b: 0.0, tx: 0.0, ty: 0.0 };

    pub fn from_parts(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        Similarity { a: scale * angle.cos(), b: scale * angle.sin(), tx, ty }
    }

    /// Row-major 2x3 matrix.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        [[self.a, -self.b, self.tx], [self.b, self.a, self.ty]]
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        [self.a * p[0] - self.b * p[1] + self.tx, self.b * p[0] + self.a * p[1] + self.ty]
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn inverse(&self) -> Result<Similarity> {
        let d = self.a * self.a + self.b * self.b;
        if d < 1e-24 {
            return Err(Error::Degenerate("similarity with zero scale has no inverse".into()));
        }
        let (a, b) = (self.a / d, -self.b / d);
        Ok(Similarity { a, b, tx: -(a * self.tx - b * self.ty), ty: -(b * self.tx + a * self.ty) })
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Similarity) -> Similarity {
        Similarity {
            a: self.a * first.a - self.b * first.b,
            b: self.b * first.a + self.a * first.b,
            tx: self.a * first.tx - self.b * first.ty + self.tx,
            ty: self.b * first.tx + self.a * first.ty + self.ty,
        }
    }
}

/// Least-squares similarity mapping `src` onto `dst`: minimises `Σ |S(src_i) - dst_i|²`.
pub fn estimate_similarity(src: &[Point], dst: &[Point]) -> Result<Similarity> {
    if src.len() != dst.len() || src.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "similarity needs matching point lists of length >= 2, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let centroid = |ps: &[Point]| {
        let s = ps.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (cs, cd) = (centroid(src), centroid(dst));
    let (mut sxx, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (x, y) = (p[0] - cs[0], p[1] - cs[1]);
        let (u, v) = (q[0] - cd[0], q[1] - cd[1]);
        sxx += x * x + y * y;
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    let spread = src.iter().map(|p| (p[0] - cs[0]).abs().max((p[1] - cs[1]).abs())).fold(0.0, f64::max);
    if sxx <= 1e-18 * n || spread < 1e-9 {
        return Err(Error::Degenerate("source landmarks coincide; similarity is undetermined".into()));
    }
    let (a, b) = (dot / sxx, cross / sxx);
    Ok(Similarity { a, b, tx: cd[0] - (a * cs[0] - b * cs[1]), ty: cd[1] - (b * cs[0] + a * cs[1]) })
}
