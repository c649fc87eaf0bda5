//! Integer-arithmetic inference over int8 operands with int32 accumulators.
//!
//! Accumulator bound: the widest layer sums 9 taps x 16 group input channels
//! of |weight| <= 127 times |input - zero_point| <= 255, i.e. at most
//! 9 * 16 * 127 * 255 = 4,663,440 per output plus an int32 bias, far inside
//! the int32 range.

use crate::data::{apply_normalization, FramePair};
use crate::error::{Error, Result};
use crate::nn::softmax_probs;
use crate::tensor::Tensor;

use super::{QuantizedConvLayer, QuantizedModel};

/// Decomposes a positive real multiplier into a 32-bit fixed-point mantissa
/// in [2^30, 2^31) and a right shift: `real ~= mantissa * 2^(-shift - 31 + 31)`
/// applied as `(acc * mantissa) >> shift` with rounding.
pub fn quantize_multiplier(real: f64) -> (i32, i32) {
    assert!(real > 0.0 && real.is_finite(), "multiplier must be positive, got {real}");
    let mut mant = real;
    let mut exp = 0i32;
    while mant >= 1.0 {
        mant /= 2.0;
        exp += 1;
    }
    while mant < 0.5 {
        mant *= 2.0;
        exp -= 1;
    }
    // mant in [0.5, 1), real = mant * 2^exp
    let mut q = (mant * (1i64 << 31) as f64).round() as i64;
    if q == 1i64 << 31 {
        q /= 2;
        exp += 1;
    }
    (q as i32, 31 - exp)
}

/// Applies a fixed-point multiplier with round-half-up: the integer
/// equivalent of `round(acc * real)`.
pub fn requantize(acc: i32, multiplier: (i32, i32)) -> i32 {
    let (mant, shift) = multiplier;
    let prod = acc as i64 * mant as i64;
    debug_assert!(shift >= 1, "requantization shift must be positive, got {shift}");
    let rounded = (prod + (1i64 << (shift - 1))) >> shift;
    rounded as i32
}

fn conv_int(
    input: &[i8],
    h: usize,
    w: usize,
    input_zp: i32,
    layer: &QuantizedConvLayer,
    relu_output: bool,
    out: &mut [i8],
) {
    let cin = layer.cin_per_group * layer.groups;
    let cout = layer.cout;
    let opg = cout / layer.groups;
    let zp_out = layer.output.zero_point;
    let lower = if relu_output { zp_out } else { -128 };

    let mut acc = vec![0i32; cout];
    for y in 0..h {
        for x in 0..w {
            acc.copy_from_slice(&layer.biases);
            for kh in 0..3usize {
                let iy = y as isize + kh as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kw in 0..3usize {
                    let ix = x as isize + kw as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let in_base = (iy as usize * w + ix as usize) * cin;
                    let tap_base = (kh * 3 + kw) * layer.cin_per_group;
                    for cl in 0..layer.cin_per_group {
                        let w_row = &layer.weights
                            [(tap_base + cl) * cout..(tap_base + cl + 1) * cout];
                        for g in 0..layer.groups {
                            let in_val =
                                input[in_base + g * layer.cin_per_group + cl] as i32 - input_zp;
                            let co0 = g * opg;
                            for (a, &wq) in
                                acc[co0..co0 + opg].iter_mut().zip(&w_row[co0..co0 + opg])
                            {
                                *a += in_val * wq as i32;
                            }
                        }
                    }
                }
            }
            let out_row = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            for (co, slot) in out_row.iter_mut().enumerate() {
                let v = zp_out + requantize(acc[co], layer.multipliers[co]);
                *slot = v.clamp(lower, 127).max(-128) as i8;
            }
        }
    }
}

fn round_div(value: i32, divisor: i32) -> i32 {
    let half = divisor / 2;
    if value >= 0 {
        (value + half) / divisor
    } else {
        (value - half) / divisor
    }
}

impl QuantizedModel {
    /// Integer inference on an already normalized-and-quantized input grid.
    /// Returns float logits (dequantized at the very end).
    pub fn infer_logits_quantized(&self, q_input: &[i8]) -> Result<Tensor> {
        let (h, w) = (self.height, self.width);
        let cin = self.strategy.input_channels();
        if q_input.len() != h * w * cin {
            return Err(Error::shape_of(&[h * w * cin], &[q_input.len()]));
        }

        let mut x = q_input.to_vec();
        let mut zp = self.input.zero_point;
        for layer in &self.conv_layers {
            let mut out = vec![0i8; h * w * layer.cout];
            conv_int(&x, h, w, zp, layer, true, &mut out);
            zp = layer.output.zero_point;
            x = out;
        }

        // global average pooling in the quantized domain (scale preserved)
        let c = self.filters[2];
        let cells = (h * w) as i32;
        let mut pooled = vec![0i8; c];
        for ch in 0..c {
            let mut sum = 0i32;
            for cell in 0..h * w {
                sum += x[cell * c + ch] as i32 - zp;
            }
            pooled[ch] = (zp + round_div(sum, cells)).clamp(-128, 127) as i8;
        }

        // classifier: int32 accumulate, dequantize the logits directly
        let in_scale = self.conv_layers.last().unwrap().output.scale;
        let k = self.num_classes;
        let mut logits = Tensor::zeros(&[k]);
        for out in 0..k {
            let mut acc = self.dense.biases[out] as i64;
            for (ch, &p) in pooled.iter().enumerate() {
                acc += (p as i32 - zp) as i64 * self.dense.weights[ch * k + out] as i64;
            }
            logits.data_mut()[out] = acc as f64 * in_scale * self.dense.weight_scales[out];
        }
        Ok(logits)
    }

    /// Quantizes a normalized float input grid with the input parameters.
    pub fn quantize_input(&self, normalized: &Tensor) -> Vec<i8> {
        normalized.data().iter().map(|&v| self.input.quantize(v)).collect()
    }

    /// End-to-end integer inference for one frame: float normalization,
    /// input quantization, integer stem and classifier, float softmax.
    pub fn predict_frame(&self, frame: &FramePair) -> Result<Tensor> {
        let normalized = apply_normalization(frame, self.strategy, &self.norm_stats)?;
        let logits = self.infer_logits_quantized(&self.quantize_input(&normalized))?;
        Ok(softmax_probs(&logits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multiplier_path_matches_real_rescaling_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let real = 10f64.powf(rng.gen_range(-6.0..-0.05));
            let multiplier = quantize_multiplier(real);
            for _ in 0..50 {
                let acc: i32 = rng.gen_range(-5_000_000..5_000_000);
                let exact = (acc as f64 * real).round();
                let fixed = requantize(acc, multiplier) as f64;
                assert!(
                    (exact - fixed).abs() <= 1.0,
                    "real {real} acc {acc}: exact {exact} fixed {fixed}"
                );
            }
        }
    }

    #[test]
    fn multiplier_mantissa_is_normalized() {
        for real in [1e-6, 3.7e-3, 0.25, 0.9, 1.5] {
            let (mant, _) = quantize_multiplier(real);
            assert!((1i64 << 30..=1i64 << 31).contains(&(mant as i64)), "real {real}");
        }
    }

    #[test]
    fn round_div_rounds_half_away_from_zero() {
        assert_eq!(round_div(65, 64), 1);
        assert_eq!(round_div(31, 64), 0);
        assert_eq!(round_div(32, 64), 1);
        assert_eq!(round_div(-32, 64), -1);
        assert_eq!(round_div(-31, 64), 0);
    }
}
