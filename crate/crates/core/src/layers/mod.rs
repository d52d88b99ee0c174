//! Layer kernels recorded on the autodiff tape.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod linear;
pub mod pool;
pub mod residual;
pub mod softmax;

pub use activation::{activation, relu, ActivationKind};
pub use batchnorm::{batch_norm, BatchNormConfig, BatchNormState, RunningStats};
pub use conv::{conv2d, conv2d_forward, ConvGeometry, ConvParams};
pub use linear::{flatten, linear};
pub use pool::{avg_pool2d, global_avg_pool, max_pool2d, pool2d, PoolKind};
pub use residual::{residual_block, BasicBlockHandles, BlockOutput, BnHandles};
pub use softmax::{log_softmax, softmax_rows};

/// Batch-norm behaviour: batch statistics (`Train`) or running statistics (`Eval`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
