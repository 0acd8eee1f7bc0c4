//! Forgery detection from mouth-region video with a lipreading-pretrained network.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f32` tensors, seeded random streams and the checkpoint format.
//! - [`nn`]: a tape-based autodiff graph, the network assemblies and gradient checks.
//! - [`preprocess`]: landmark smoothing, face alignment and mouth cropping.
//! - [`train`]: losses, the optimiser and the two training stages.
//! - [`corruptions`]: the seven perturbations used for robustness sweeps.
//! - [`eval`]: video-level scoring, ROC AUC, protocols and occlusion maps.
//! - [`synth`]: procedural talking-mouth corpora for tests and demos.

pub mod corruptions;
pub mod error;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// Grayscale normalisation applied to mouth crops after scaling to `[0, 1]`.
pub const NORM_MEAN: f32 = 0.421;
pub const NORM_STD: f32 = 0.165;
