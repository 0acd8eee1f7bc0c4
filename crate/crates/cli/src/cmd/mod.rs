pub mod eval;
pub mod preprocess;
pub mod synth;
pub mod tools;
pub mod train;
