//! Differentiable forward/backward kernels for the backbone layers.
//!
//! All kernels are pure functions over immutable inputs (the one exception,
//! [`batchnorm_forward`] in training mode, mutates only the moving statistics
//! it is documented to update). Summation order inside every output element
//! is fixed, so results are reproducible bit for bit.

mod batchnorm;
pub(crate) mod conv;
mod loss;
mod ops;

pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, update_moving_stats,
    BatchNormParams, BnCache, BnMode,
};
pub use conv::{conv2d_grouped, conv2d_grouped_backward, ConvGrads, ConvLayerParams};
pub use loss::{softmax_cross_entropy, softmax_probs};
pub use ops::{
    dense, dense_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward,
};
