//! Forward kernels and their gradient rules, usable without a tape.

mod activation;
mod conv;
mod elementwise;
mod linear;
mod pool;

pub use activation::{activation, sigmoid, softplus, Activation};
pub use conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvGeometry, ConvGrads,
};
pub use elementwise::{
    add, binary, binary_backward, broadcast_shape, concat, concat_backward, mul, BinaryOp,
};
pub use linear::{linear, linear_backward, LinearGrads};
pub use pool::{pool, pool_backward, pool_with_indices, PoolKind, Pooled};
mod norm;
pub use norm::{channel_stats, normalize, normalize_backward, ChannelStats};
