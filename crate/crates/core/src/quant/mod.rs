//! Post-training 8-bit quantization with batch-norm folding.
//!
//! Scheme: symmetric per-output-channel int8 weights (zero point 0, range
//! [-127, 127]), asymmetric per-tensor signed int8 activations, int32 biases
//! at `input_scale * weight_scale`. Batch norm is folded into the preceding
//! convolution before quantization.

mod format;
mod infer;

pub use format::{load_quantized, save_quantized};
pub use infer::{quantize_multiplier, requantize};

use serde::{Deserialize, Serialize};

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::model::{FusionStrategy, Model};
use crate::nn::{batchnorm_infer, conv2d_grouped, relu};
use crate::tensor::Tensor;

/// Affine quantization parameters of one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
}

impl QuantParams {
    /// Real value of a quantized code.
    pub fn dequantize(&self, q: i32) -> f64 {
        (q - self.zero_point) as f64 * self.scale
    }

    /// Nearest representable code for a real value, saturating to int8.
    pub fn quantize(&self, v: f64) -> i8 {
        let q = (v / self.scale).round() as i64 + self.zero_point as i64;
        q.clamp(-128, 127) as i8
    }
}

/// Smallest scale handed out for degenerate (constant) ranges.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Folds every batch-norm layer into its preceding convolution:
/// `w' = w * gamma / sqrt(var + eps)` per output channel,
/// `b' = (b - mean) * gamma / sqrt(var + eps) + beta`.
///
/// The returned model keeps the same structure with each normalization
/// stage replaced by an exact identity (epsilon 0), which also marks the
/// model as folded; folding an already folded model is an error.
pub fn fold_batchnorm(model: &Model) -> Result<Model> {
    if is_folded(model) {
        return Err(Error::InvalidConfig("model is already folded (no batch norm remains)".into()));
    }
    let mut folded = model.clone();
    for block in &mut folded.blocks {
        let cout = block.conv.cout();
        let factors: Vec<f64> = (0..cout)
            .map(|c| {
                block.bn.gamma.data()[c]
                    / (block.bn.moving_var.data()[c] + block.bn.epsilon).sqrt()
            })
            .collect();
        for (i, w) in block.conv.kernel.data_mut().iter_mut().enumerate() {
            *w *= factors[i % cout];
        }
        for c in 0..cout {
            let b = block.conv.bias.data()[c];
            block.conv.bias.data_mut()[c] =
                (b - block.bn.moving_mean.data()[c]) * factors[c] + block.bn.beta.data()[c];
        }
        block.bn.gamma = Tensor::filled(&[cout], 1.0);
        block.bn.beta = Tensor::zeros(&[cout]);
        block.bn.moving_mean = Tensor::zeros(&[cout]);
        block.bn.moving_var = Tensor::filled(&[cout], 1.0);
        block.bn.epsilon = 0.0;
    }
    Ok(folded)
}

/// Whether every normalization stage is the exact identity left by folding.
pub fn is_folded(model: &Model) -> bool {
    model.blocks.iter().all(|b| b.bn.epsilon == 0.0)
}

/// Observed float ranges at every activation boundary: the network input,
/// then each block's post-ReLU output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRanges {
    pub boundaries: Vec<(f64, f64)>,
}

/// Runs the calibration set through the float model and records min/max per
/// boundary. Post-ReLU boundaries get their minimum clipped to <= 0 so zero
/// stays representable.
pub fn calibrate(model: &Model, inputs: &[Tensor]) -> Result<ActivationRanges> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("calibration set"));
    }
    let n_boundaries = model.blocks.len() + 1;
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_boundaries];
    let mut track = |slot: usize, t: &Tensor| {
        for &v in t.data() {
            if v < ranges[slot].0 {
                ranges[slot].0 = v;
            }
            if v > ranges[slot].1 {
                ranges[slot].1 = v;
            }
        }
    };
    for input in inputs {
        track(0, input);
        let mut x = input.clone();
        for (i, block) in model.blocks.iter().enumerate() {
            let pre = conv2d_grouped(&x, &block.conv)?;
            let normed = batchnorm_infer(&pre, &block.bn)?;
            x = relu(&normed);
            track(i + 1, &x);
        }
    }
    for slot in 1..n_boundaries {
        ranges[slot].0 = ranges[slot].0.min(0.0);
    }
    Ok(ActivationRanges { boundaries: ranges })
}

/// Per-tensor asymmetric signed int8 parameters for an observed range. The
/// range is extended to include zero; degenerate ranges fall back to
/// [`SCALE_FLOOR`].
pub fn activation_qparams(range: (f64, f64), warnings: &mut Vec<String>) -> QuantParams {
    let min = range.0.min(0.0);
    let max = range.1.max(0.0);
    let mut scale = (max - min) / 255.0;
    if scale < SCALE_FLOOR {
        warnings.push(format!("degenerate activation range ({min}, {max}); scale floored"));
        scale = SCALE_FLOOR;
    }
    let zero_point = (-128.0 - min / scale).round().clamp(-128.0, 127.0) as i32;
    QuantParams { scale, zero_point }
}

/// One integer convolution stage (normalization pre-folded, ReLU fused into
/// the output clamp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedConvLayer {
    pub groups: usize,
    pub cin_per_group: usize,
    pub cout: usize,
    /// int8 weights, `[3, 3, cin/groups, cout]` row-major, symmetric per
    /// output channel.
    pub weights: Vec<i8>,
    pub weight_scales: Vec<f64>,
    /// Biases at `input_scale * weight_scale[channel]`.
    pub biases: Vec<i32>,
    /// Post-ReLU activation parameters of this layer's output.
    pub output: QuantParams,
    /// Fixed-point requantization multipliers, one per output channel,
    /// recomputed from the scales on load.
    pub multipliers: Vec<(i32, i32)>,
}

/// The integer classifier head. Logits leave as floats, so no output
/// quantization parameters are needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedDense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// int8 weights, `[in, out]` row-major.
    pub weights: Vec<i8>,
    pub weight_scales: Vec<f64>,
    pub biases: Vec<i32>,
}

/// A fully quantized backbone ready for integer inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub strategy: FusionStrategy,
    pub height: usize,
    pub width: usize,
    pub filters: [usize; 3],
    pub num_classes: usize,
    pub norm_stats: ChannelStats,
    pub input: QuantParams,
    pub conv_layers: Vec<QuantizedConvLayer>,
    pub dense: QuantizedDense,
}

impl QuantizedModel {
    /// Bytes spent on int8 weights alone.
    pub fn weight_bytes(&self) -> usize {
        self.conv_layers.iter().map(|l| l.weights.len()).sum::<usize>()
            + self.dense.weights.len()
    }
}

/// Picks symmetric per-channel weight scales (max-abs over the channel,
/// floored for all-zero channels) and quantizes a weight tensor laid out
/// with the output channel innermost.
fn quantize_weights_per_channel(
    data: &[f64],
    cout: usize,
    warnings: &mut Vec<String>,
    context: &str,
) -> (Vec<i8>, Vec<f64>) {
    let mut max_abs = vec![0.0f64; cout];
    for (i, &w) in data.iter().enumerate() {
        let c = i % cout;
        if w.abs() > max_abs[c] {
            max_abs[c] = w.abs();
        }
    }
    let scales: Vec<f64> = max_abs
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let s = m / 127.0;
            if s < SCALE_FLOOR {
                warnings.push(format!("{context}: all-zero weight channel {c}; scale floored"));
                SCALE_FLOOR
            } else {
                s
            }
        })
        .collect();
    let q = data
        .iter()
        .enumerate()
        .map(|(i, &w)| ((w / scales[i % cout]).round() as i64).clamp(-127, 127) as i8)
        .collect();
    (q, scales)
}

fn quantize_bias(bias: &[f64], in_scale: f64, weight_scales: &[f64]) -> Vec<i32> {
    bias.iter()
        .enumerate()
        .map(|(c, &b)| {
            let scaled = (b / (in_scale * weight_scales[c])).round();
            scaled.clamp(i32::MIN as f64, i32::MAX as f64) as i32
        })
        .collect()
}

/// Converts a folded float model into an int8 model using calibrated
/// activation ranges. Returns the model plus any degenerate-range warnings.
pub fn quantize_model(
    folded: &Model,
    ranges: &ActivationRanges,
) -> Result<(QuantizedModel, Vec<String>)> {
    if !is_folded(folded) {
        return Err(Error::InvalidConfig("quantization requires a folded model".into()));
    }
    if ranges.boundaries.len() != folded.blocks.len() + 1 {
        return Err(Error::shape_of(&[folded.blocks.len() + 1], &[ranges.boundaries.len()]));
    }
    let mut warnings = Vec::new();
    let input = activation_qparams(ranges.boundaries[0], &mut warnings);

    let mut conv_layers = Vec::with_capacity(folded.blocks.len());
    let mut in_params = input;
    for (i, block) in folded.blocks.iter().enumerate() {
        let cout = block.conv.cout();
        let (weights, weight_scales) = quantize_weights_per_channel(
            block.conv.kernel.data(),
            cout,
            &mut warnings,
            &format!("conv{}", i + 1),
        );
        let biases = quantize_bias(block.conv.bias.data(), in_params.scale, &weight_scales);
        let output = activation_qparams(ranges.boundaries[i + 1], &mut warnings);
        let multipliers = weight_scales
            .iter()
            .map(|&ws| quantize_multiplier(in_params.scale * ws / output.scale))
            .collect();
        conv_layers.push(QuantizedConvLayer {
            groups: block.conv.groups,
            cin_per_group: block.conv.cin_per_group(),
            cout,
            weights,
            weight_scales,
            biases,
            output,
            multipliers,
        });
        in_params = output;
    }

    let out_dim = folded.config.num_classes;
    let (weights, weight_scales) = quantize_weights_per_channel(
        folded.dense_weights.data(),
        out_dim,
        &mut warnings,
        "dense",
    );
    let biases = quantize_bias(folded.dense_bias.data(), in_params.scale, &weight_scales);
    let dense = QuantizedDense {
        in_dim: folded.config.filters[2],
        out_dim,
        weights,
        weight_scales,
        biases,
    };

    Ok((
        QuantizedModel {
            strategy: folded.config.strategy,
            height: folded.config.height,
            width: folded.config.width,
            filters: folded.config.filters,
            num_classes: folded.config.num_classes,
            norm_stats: folded.norm_stats.clone(),
            input,
            conv_layers,
            dense,
        },
        warnings,
    ))
}
