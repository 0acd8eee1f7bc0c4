//! Video-level scoring, ROC/AUC, protocol runners, occlusion sensitivity and a single-frame probe.

mod metrics;
mod occlusion;
mod probe;
mod protocols;
mod scoring;

pub use metrics::{accuracy, roc_auc, RocCurve, VideoScore};
pub use occlusion::{occlusion_fill, occlusion_map, OcclusionMap, DEFAULT_BLOCK, OCCLUSION_GRAY};
pub use probe::{frame_features, frame_probe, ProbeConfig, ProbeReport};
pub use protocols::{
    fake_methods, protocol_clip_sweep, protocol_cross_manipulation, protocol_plain, protocol_robustness, ClipSweepReport,
    ClipSweepRow, CorruptFn, CrossManipulationReport, CrossManipulationRow, KindMean, PlainReport, RobustnessCell,
    RobustnessReport, SWEEP_LENGTHS,
};
pub use scoring::{score_video, score_videos, video_clips, ClipModel, CorrectClass, ForgeryModel, LipreadModel};
