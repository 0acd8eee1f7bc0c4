use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clip probabilities of one video and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoScore {
    pub video_id: String,
    pub clip_scores: Vec<f64>,
    pub video_score: f64,
    pub label: u8,
}

impl VideoScore {
    pub fn new(video_id: impl Into<String>, clip_scores: Vec<f64>, label: u8) -> Result<Self> {
        let video_id = video_id.into();
        if clip_scores.is_empty() {
            return Err(Error::Data(format!("video {video_id:?} has no clips to score")));
        }
        if clip_scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument(format!("video {video_id:?} has a clip score outside [0, 1]")));
        }
        let video_score = clip_scores.iter().sum::<f64>() / clip_scores.len() as f64;
        Ok(VideoScore { video_id, clip_scores, video_score, label })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("label {l} is not 0 or 1")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// ROC of `scores` (higher means fake, label 1) with trapezoidal area.
///
/// Tied scores form a single diagonal step, which contributes the half-credit
/// tie term of the Mann-Whitney statistic.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape(&[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let (pos, neg) = class_counts(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("AUC needs both real and fake videos".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of (1/pos)(1/neg) cells, kept integral for exactness.
    let mut doubled: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled += (fp - fp0) * (tp + tp0);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = doubled as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

/// Fraction of videos whose thresholded score (`>= threshold` means fake) matches the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "accuracy needs equal non-empty lists, got {} scores and {} labels",
            scores.len(),
            labels.len()
        )));
    }
    class_counts(labels)?;
    let hits = scores.iter().zip(labels).filter(|(s, l)| u8::from(**s >= threshold) == **l).count();
    Ok(hits as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_count(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &l) in labels.iter().enumerate() {
            for (j, &m) in labels.iter().enumerate() {
                if l == 1 && m == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn spec_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[0.4, 0.8, 0.6, 0.9], &[0, 0, 1, 1]).unwrap().auc, 0.75);
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert_eq!(accuracy(&[0.9, 0.1], &[1, 0], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.1, 0.9], &[1, 0], 0.5).unwrap(), 0.0);
        assert!((accuracy(&[0.6, 0.6, 0.1], &[1, 0, 0], 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn curve_is_monotone_from_origin_to_corner() {
        let c = roc_auc(&[0.5, 0.1, 0.5, 0.7, 0.2], &[1, 0, 0, 1, 0]).unwrap();
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn video_score_is_mean() {
        let v = VideoScore::new("v", vec![0.2, 0.8], 1).unwrap();
        assert_eq!(v.video_score, 0.5);
        assert!(VideoScore::new("v", vec![], 1).is_err());
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..12).prop_map(|k| k as f64 / 11.0), n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn trapezoid_equals_pair_counting((s, l) in scored()) {
            let auc = roc_auc(&s, &l).unwrap().auc;
            prop_assert!((auc - pair_count(&s, &l)).abs() <= 1e-12);
        }

        #[test]
        fn invariant_under_monotone_maps((s, l) in scored(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let mapped: Vec<f64> = s.iter().map(|x| (a * x + b).exp()).collect();
            prop_assert_eq!(roc_auc(&s, &l).unwrap().auc, roc_auc(&mapped, &l).unwrap().auc);
        }
    }
}
