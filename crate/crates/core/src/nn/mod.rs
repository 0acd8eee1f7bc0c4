pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod model;
mod params;

pub use graph::{
    BatchNormSpec, ConvGeometry, Graph, Mode, Padding, PoolGeometry, RunningStatUpdate, Var,
};
pub use model::{
    ExtractorConfig, Head, LipForensicsModel, ModelConfig, Normalization, TcnConfig, BN_EPS, BN_MOMENTUM,
    FRONTEND_KERNEL, FRONTEND_PADDING, FRONTEND_STRIDE, PRELU_INIT,
};
pub use params::{Gradients, ParamId, ParameterStore, Partition, TensorRole};
