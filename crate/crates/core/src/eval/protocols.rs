use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corruptions::{CorruptionKind, CorruptionSpec, SEVERITIES};
use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, roc_auc, RocCurve, VideoScore};
use crate::eval::scoring::{score_videos, ClipModel, ForgeryModel};
use crate::nn::{LipForensicsModel, ModelConfig, ParameterStore};
use crate::tensor::{Rng, Tensor};
use crate::train::{finetune_forgery, FinetuneMode, ForgerySample, TrainConfig};

/// Clip lengths of the temporal-extent study.
pub const SWEEP_LENGTHS: [usize; 6] = [5, 10, 15, 20, 25, 30];

fn auc_of(scores: &[VideoScore]) -> Result<f64> {
    let s: Vec<f64> = scores.iter().map(|v| v.video_score).collect();
    let l: Vec<u8> = scores.iter().map(|v| v.label).collect();
    Ok(roc_auc(&s, &l)?.auc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlainReport {
    /// `None` when the test set holds only one class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub roc: Option<RocCurve>,
    pub videos: Vec<VideoScore>,
}

impl PlainReport {
    pub fn table(&self) -> String {
        let mut t = format!("{:<24} {:>8} {:>6}\n", "video", "score", "label");
        for v in &self.videos {
            let _ = writeln!(t, "{:<24} {:>8.4} {:>6}", v.video_id, v.video_score, v.label);
        }
        let auc = self.auc.map_or("n/a".to_string(), |a| format!("{:.2}%", 100.0 * a));
        let _ = writeln!(t, "\nAUC {auc}  accuracy {:.2}%", 100.0 * self.accuracy);
        t
    }
}

/// Video-level AUC and accuracy on one test set.
pub fn protocol_plain(model: &dyn ClipModel, config: &ModelConfig, videos: &[ForgerySample]) -> Result<PlainReport> {
    let scores = score_videos(model, config, videos)?;
    let s: Vec<f64> = scores.iter().map(|v| v.video_score).collect();
    let l: Vec<u8> = scores.iter().map(|v| v.label).collect();
    let roc = if l.contains(&0) && l.contains(&1) { Some(roc_auc(&s, &l)?) } else { None };
    Ok(PlainReport { auc: roc.as_ref().map(|r| r.auc), accuracy: accuracy(&s, &l, 0.5)?, roc, videos: scores })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossManipulationRow {
    pub held_out: String,
    pub auc: f64,
    pub train_videos: usize,
    pub test_videos: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossManipulationReport {
    pub rows: Vec<CrossManipulationRow>,
    pub average: f64,
}

impl CrossManipulationReport {
    pub fn table(&self) -> String {
        let mut header = String::from("train on rest, test on");
        let mut line = String::from("AUC (%)");
        for r in &self.rows {
            let _ = write!(header, " | {:>16}", r.held_out);
            let _ = write!(line, "{}| {:>16.1}", " ".repeat(if line.len() == 7 { 16 } else { 1 }), 100.0 * r.auc);
        }
        let _ = write!(header, " | {:>8}", "Avg");
        let _ = write!(line, " | {:>8.1}", 100.0 * self.average);
        format!("{header}\n{line}\n")
    }
}

/// Fake methods present in `videos`, sorted.
pub fn fake_methods(videos: &[ForgerySample]) -> Vec<String> {
    videos.iter().filter(|v| v.label == 1).map(|v| v.method.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// For each held-out method: finetune from `pretrained` on reals plus the other methods, then
/// measure video-level AUC on test reals plus the held-out method's fakes.
#[allow(clippy::too_many_arguments)]
pub fn protocol_cross_manipulation(
    model: &LipForensicsModel,
    pretrained: &ParameterStore,
    train: &[ForgerySample],
    test: &[ForgerySample],
    held_out: &[String],
    mode: FinetuneMode,
    cfg: &TrainConfig,
    batch_size: usize,
) -> Result<CrossManipulationReport> {
    let methods = if held_out.is_empty() { fake_methods(test) } else { held_out.to_vec() };
    if fake_methods(train).len() < 2 && held_out.is_empty() {
        return Err(Error::Data("cross-manipulation needs at least two fake methods".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for m in &methods {
        let test_set: Vec<ForgerySample> =
            test.iter().filter(|v| v.label == 0 || &v.method == m).cloned().collect();
        if !test_set.iter().any(|v| v.label == 1) {
            return Err(Error::Data(format!("held-out method {m:?} has no fake test videos")));
        }
        let train_set: Vec<ForgerySample> =
            train.iter().filter(|v| v.label == 0 || &v.method != m).cloned().collect();
        if !train_set.iter().any(|v| v.label == 1) {
            return Err(Error::Data(format!("holding out {m:?} leaves no fake training videos")));
        }
        let mut store = pretrained.clone();
        finetune_forgery(model, &mut store, &train_set, mode, cfg, &mut |_| Ok(()))?;
        let scorer = ForgeryModel { model, store: &store, batch_size };
        let scores = score_videos(&scorer, model.config(), &test_set)?;
        rows.push(CrossManipulationRow {
            held_out: m.clone(),
            auc: auc_of(&scores)?,
            train_videos: train_set.len(),
            test_videos: test_set.len(),
        });
    }
    let average = rows.iter().map(|r| r.auc).sum::<f64>() / rows.len() as f64;
    Ok(CrossManipulationReport { rows, average })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RobustnessCell {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KindMean {
    pub kind: CorruptionKind,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RobustnessReport {
    pub clean: f64,
    /// Kind-major, severities 1 to 5.
    pub cells: Vec<RobustnessCell>,
    pub kind_means: Vec<KindMean>,
    /// Mean of the per-kind means.
    pub average: f64,
}

impl RobustnessReport {
    pub fn table(&self) -> String {
        let mut t = format!("{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n", "kind", "1", "2", "3", "4", "5", "mean");
        for km in &self.kind_means {
            let _ = write!(t, "{:<12}", km.kind.tag());
            for c in self.cells.iter().filter(|c| c.kind == km.kind) {
                let _ = write!(t, " {:>7.1}", 100.0 * c.auc);
            }
            let _ = writeln!(t, " {:>7.1}", 100.0 * km.auc);
        }
        let _ = writeln!(t, "\nclean {:.1}  average {:.1}", 100.0 * self.clean, 100.0 * self.average);
        t
    }
}

/// `corrupt(frames, spec)` maps a raw `[F, H, W, 1]` video to its corrupted version.
pub type CorruptFn<'a> = &'a dyn Fn(&Tensor, &CorruptionSpec) -> Result<Tensor>;

/// AUC on the clean set and on every (kind, severity); video `i` is corrupted with a seed
/// drawn from `Rng::new(seed).substream(&[i])`.
pub fn protocol_robustness(
    model: &dyn ClipModel,
    config: &ModelConfig,
    videos: &[ForgerySample],
    seed: u64,
    corrupt: CorruptFn,
) -> Result<RobustnessReport> {
    let clean = auc_of(&score_videos(model, config, videos)?)?;
    let mut cells = Vec::new();
    let mut kind_means = Vec::new();
    for kind in CorruptionKind::ALL {
        let mut sum = 0.0;
        for severity in SEVERITIES {
            let corrupted = videos
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let spec = CorruptionSpec::new(kind, severity, Rng::new(seed).substream(&[i as u64]).next_u64())?;
                    Ok(ForgerySample { frames: corrupt(&v.frames, &spec)?, ..v.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            let auc = auc_of(&score_videos(model, config, &corrupted)?)?;
            sum += auc;
            cells.push(RobustnessCell { kind, severity, auc });
        }
        kind_means.push(KindMean { kind, auc: sum / SEVERITIES.len() as f64 });
    }
    let average = kind_means.iter().map(|k| k.auc).sum::<f64>() / kind_means.len() as f64;
    Ok(RobustnessReport { clean, cells, kind_means, average })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClipSweepRow {
    pub clip_length: usize,
    pub clips: usize,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClipSweepReport {
    pub rows: Vec<ClipSweepRow>,
}

impl ClipSweepReport {
    pub fn table(&self) -> String {
        let mut t = format!("{:>6} {:>7} {:>8}\n", "T", "clips", "AUC (%)");
        for r in &self.rows {
            let _ = writeln!(t, "{:>6} {:>7} {:>8.1}", r.clip_length, r.clips, 100.0 * r.auc);
        }
        t
    }
}

/// Video-level AUC when the same model scores non-overlapping clips of each length.
pub fn protocol_clip_sweep(
    model: &dyn ClipModel,
    config: &ModelConfig,
    videos: &[ForgerySample],
    lengths: &[usize],
) -> Result<ClipSweepReport> {
    let rows = lengths
        .iter()
        .map(|&t| {
            let cfg = ModelConfig { clip_length: t, ..config.clone() };
            let scores = score_videos(model, &cfg, videos)?;
            Ok(ClipSweepRow { clip_length: t, clips: scores.iter().map(|s| s.clip_scores.len()).sum(), auc: auc_of(&scores)? })
        })
        .collect::<Result<_>>()?;
    Ok(ClipSweepReport { rows })
}
