//! Training-and-inference toolkit for tiny multimodal fusion CNNs on 8x8
//! thermal/depth sensor grids: grouped-convolution backbones at four fusion
//! depths, the full training protocol, post-training int8 quantization, a
//! synthetic paired-frame generator, evaluation metrics and a duty-cycle
//! power model.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod power;
pub mod quant;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
