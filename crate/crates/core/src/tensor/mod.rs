//! Dense float tensors, seeded randomness and the checkpoint file format.

mod checkpoint;
mod rng;
#[allow(clippy::module_inception)]
mod tensor;

pub use checkpoint::{load_tensors, read_tensors, save_tensors, write_tensors, TensorMap, MAGIC};
pub use rng::Rng;
pub use tensor::{elementwise, reduce, sigmoid, ElementwiseOp, Operand, ReduceOp, Tensor};
