//! Landmark smoothing, similarity alignment to a canonical face and 96x96 mouth crops.

mod align;
mod crop;
mod io;
mod landmarks;

pub use align::{estimate_similarity, MeanFace, Similarity, CANONICAL_SIZE};
pub use crop::{
    clip_starts, crop_mouth, luma, make_clips, preprocess_video, warp_frame, Frame, PreprocessConfig, CROP_SIZE,
    SMOOTHING_WINDOW,
};
pub use io::{
    load_frames, load_landmarks, quantize, save_frame_png, save_landmarks, ClipCache, Label, Manifest, ManifestEntry,
    Split,
};
pub use landmarks::{
    alignment_points, mouth_center, smooth_landmarks, FrameLandmarks, LandmarkTrack, Point, MOUTH, NUM_LANDMARKS,
};
