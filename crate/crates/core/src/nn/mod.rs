//! Neural-network primitives with hand-written forward and backward passes.
//!
//! Layers keep the activations they need for the backward pass only when run
//! in [`Mode::Train`]; calling `backward` without such a forward is a
//! [`State`](crate::Error::State) error.

mod activation;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod init;
mod linear;
mod mbconv;
mod optim;
mod params;
mod pool;
mod real;
mod se;
mod tensor;

pub use activation::{mish, mish_grad, sigmoid, softplus, Mish};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use checkpoint::Checkpoint;
pub use conv::{conv1d_backward, conv1d_forward, Conv1d, ConvGeometry};
pub use init::fan_in_uniform;
pub use linear::Linear;
pub use mbconv::FusedMbConv;
pub use optim::{Adam, AdamConfig};
pub use params::{Buffer, BufferId, Param, ParamId, ParameterStore};
pub use pool::{global_max_pool, GlobalMaxPool};
pub use real::Real;
pub use se::SqueezeExcite;
pub use tensor::Tensor3;

/// How batch normalization treats a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-statistic update, activations recorded for backward.
    Train,
    /// Running statistics; nothing recorded.
    Eval,
    /// Batch statistics folded into a cumulative average; nothing recorded.
    CollectStats,
}
