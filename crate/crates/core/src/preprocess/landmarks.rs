use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;
/// Outer and inner lip contour indices in the 68-point layout.
pub const MOUTH: std::ops::Range<usize> = 48..68;

pub type Point = [f64; 2];
pub type FrameLandmarks = [Point; NUM_LANDMARKS];

/// Per-frame 68-point landmarks in source-image pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkTrack {
    frames: Vec<Vec<Point>>,
}

impl LandmarkTrack {
    pub fn new(frames: Vec<FrameLandmarks>) -> Result<Self> {
        Self::from_nested(frames.into_iter().map(|f| f.to_vec()).collect())
    }

    /// Validates a `[frame][68][2]` nested list.
    pub fn from_nested(frames: Vec<Vec<Point>>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.len() != NUM_LANDMARKS {
                return Err(Error::Data(format!("frame {i} has {} landmarks, expected {NUM_LANDMARKS}", f.len())));
            }
            if f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("frame {i} has a non-finite landmark coordinate")));
            }
        }
        Ok(LandmarkTrack { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[Point] {
        &self.frames[i]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[Point]> {
        self.frames.iter().map(|f| f.as_slice())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let nested: Vec<Vec<Point>> =
            serde_json::from_str(text).map_err(|e| Error::json("landmark file", e))?;
        Self::from_nested(nested)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.frames).expect("landmarks serialise")
    }
}

/// Moving average of every coordinate over `window` frames.
///
/// The window for frame `i` covers `[i - window/2, i + (window - 1)/2 + ...)`, i.e.
/// `window / 2` frames before and `window - 1 - window / 2` after, truncated at
/// the sequence ends and averaged over the frames actually present.
pub fn smooth_landmarks(track: &LandmarkTrack, window: usize) -> LandmarkTrack {
    let n = track.len();
    let w = window.max(1);
    let before = w / 2;
    let after = w - 1 - before;
    let frames = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            let count = (hi - lo + 1) as f64;
            (0..NUM_LANDMARKS)
                .map(|k| {
                    let mut acc = [0.0f64; 2];
                    for f in lo..=hi {
                        acc[0] += track.frames[f][k][0];
                        acc[1] += track.frames[f][k][1];
                    }
                    [acc[0] / count, acc[1] / count]
                })
                .collect()
        })
        .collect();
    LandmarkTrack { frames }
}

/// Left-eye center (36-41), right-eye center (42-47) and nose points 28, 30, 33.
pub fn alignment_points(landmarks: &[Point]) -> [Point; 5] {
    let mean = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        let s = landmarks[r].iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    [mean(36..42), mean(42..48), landmarks[28], landmarks[30], landmarks[33]]
}

pub fn mouth_center(landmarks: &[Point]) -> Point {
    let n = MOUTH.len() as f64;
    let s = landmarks[MOUTH].iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track_from_x(xs: &[f64]) -> LandmarkTrack {
        LandmarkTrack::new(xs.iter().map(|&x| [[x, 0.0]; NUM_LANDMARKS]).collect()).unwrap()
    }

    #[test]
    fn constant_and_single_frame_tracks_are_fixed_points() {
        let t = track_from_x(&[3.5; 9]);
        assert_eq!(smooth_landmarks(&t, 12), t);
        let t = track_from_x(&[1.25]);
        assert_eq!(smooth_landmarks(&t, 12), t);
    }

    #[test]
    fn impulse_response_is_one_twelfth() {
        let mut xs = vec![0.0; 40];
        xs[20] = 1.0;
        let s = smooth_landmarks(&track_from_x(&xs), 12);
        // Oracle: frame i averages the 12 frames i-6..=i+5, so the impulse reaches frames 15..=26.
        for i in 0..40 {
            let expected = if (15..=26).contains(&i) { 1.0 / 12.0 } else { 0.0 };
            assert!((s.frame(i)[0][0] - expected).abs() < 1e-15, "frame {i}");
        }
    }

    #[test]
    fn shift_equivariant_away_from_edges() {
        let xs: Vec<f64> = (0..60).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let a = smooth_landmarks(&track_from_x(&xs), 12);
        let shifted: Vec<f64> = std::iter::once(0.0).chain(xs.iter().copied()).collect();
        let b = smooth_landmarks(&track_from_x(&shifted), 12);
        for i in 6..50 {
            assert!((a.frame(i)[0][0] - b.frame(i + 1)[0][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = track_from_x(&[1.0, 2.0]);
        assert_eq!(LandmarkTrack::from_json(&t.to_json()).unwrap(), t);
        assert!(LandmarkTrack::from_json("[[[0.0, 1.0]]]").is_err());
    }
}
