//! Deterministic synthetic corpora: a toy word-classification set whose classes differ only in
//! mouth-opening rhythm, and a real/fake set with temporal mouth artefacts.

mod corpus;
mod disk;
mod render;

pub use corpus::{
    artefact_states, gen_forgery, gen_lipreading, plan_forgery, plan_lipreading, ArtefactFamily, SynthConfig,
    Trajectory, VideoPlan, CLOSE_FLOOR, FLICKER_HEIGHT, FLICKER_WIDTH, JITTER_FRAMES,
};
pub use disk::{random_pose, render_video, write_videos, DiskOptions, RenderedVideo};
pub use render::{
    canonical_landmarks, mouth_patch, render_frame, render_patch, shade, static_patch, Appearance, MouthState, APERTURE_HEIGHT, MOUTH_CENTER,
    MOUTH_HALF_WIDTH, PIXEL_NOISE,
};
