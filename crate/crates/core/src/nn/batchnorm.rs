//! Per-channel batch normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable scale/shift plus running statistics for one normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    /// Fresh layer: gamma 1, beta 0, moving mean 0, moving var 1.
    pub fn new(channels: usize, epsilon: f64, momentum: f64) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            moving_mean: Tensor::zeros(&[channels]),
            moving_var: Tensor::filled(&[channels], 1.0),
            epsilon,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor) -> Result<usize> {
        let c = *input.shape().last().unwrap();
        if c != self.channels() {
            return Err(Error::shape_of(&[self.channels()], &[c]));
        }
        Ok(c)
    }
}

/// Whether a forward pass uses batch statistics (updating the running ones)
/// or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Training,
    Inference,
}

/// Values cached by the training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Inference-mode forward using the running statistics only.
pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    let c = params.check(input)?;
    let mut scale = vec![0.0; c];
    let mut shift = vec![0.0; c];
    for i in 0..c {
        let s = params.gamma.data()[i] / (params.moving_var.data()[i] + params.epsilon).sqrt();
        scale[i] = s;
        shift[i] = params.beta.data()[i] - params.moving_mean.data()[i] * s;
    }
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        for ((v, &s), &sh) in row.iter_mut().zip(&scale).zip(&shift) {
            *v = *v * s + sh;
        }
    }
    Ok(out)
}

/// Training-mode forward: normalizes by batch statistics taken over every
/// axis except channels. Pure; the caller applies the running-stat update.
pub fn batchnorm_train(input: &Tensor, params: &BatchNormParams) -> Result<(Tensor, BnCache)> {
    let c = params.check(input)?;
    let m = input.len() / c;
    let data = input.data();

    let mut mean = vec![0.0; c];
    for row in data.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for mu in &mut mean {
        *mu /= m as f64;
    }
    let mut var = vec![0.0; c];
    for row in data.chunks_exact(c) {
        for ((s, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - mu;
            *s += d * d;
        }
    }
    for s in &mut var {
        *s /= m as f64;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + params.epsilon).sqrt()).collect();
    let mut xhat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    for ((xh_row, out_row), in_row) in xhat
        .data_mut()
        .chunks_exact_mut(c)
        .zip(out.data_mut().chunks_exact_mut(c))
        .zip(data.chunks_exact(c))
    {
        for ch in 0..c {
            let xh = (in_row[ch] - mean[ch]) * inv_std[ch];
            xh_row[ch] = xh;
            out_row[ch] = gamma[ch] * xh + beta[ch];
        }
    }
    Ok((out, BnCache { xhat, inv_std, batch_mean: mean, batch_var: var }))
}

/// Blends batch statistics into the running ones:
/// `moving <- momentum * moving + (1 - momentum) * batch`.
pub fn update_moving_stats(params: &mut BatchNormParams, cache: &BnCache) {
    let m = params.momentum;
    for (mv, &b) in params.moving_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
        *mv = m * *mv + (1.0 - m) * b;
    }
    for (mv, &b) in params.moving_var.data_mut().iter_mut().zip(&cache.batch_var) {
        *mv = m * *mv + (1.0 - m) * b;
    }
}

/// Mode-dispatching forward. Training mode also updates the running stats.
pub fn batchnorm_forward(
    input: &Tensor,
    params: &mut BatchNormParams,
    mode: BnMode,
) -> Result<Tensor> {
    match mode {
        BnMode::Inference => batchnorm_infer(input, params),
        BnMode::Training => {
            let (out, cache) = batchnorm_train(input, params)?;
            update_moving_stats(params, &cache);
            Ok(out)
        }
    }
}

/// Backward pass through the batch statistics. Returns the input gradient and
/// accumulates gamma/beta gradients.
pub fn batchnorm_backward(
    cache: &BnCache,
    params: &BatchNormParams,
    dout: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let c = params.channels();
    let m = dout.len() / c;
    let xhat = cache.xhat.data();
    let dy = dout.data();

    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for (dy_row, xh_row) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            sum_dy[ch] += dy_row[ch];
            sum_dy_xhat[ch] += dy_row[ch] * xh_row[ch];
        }
    }
    for ch in 0..c {
        dbeta.data_mut()[ch] += sum_dy[ch];
        dgamma.data_mut()[ch] += sum_dy_xhat[ch];
    }

    let mf = m as f64;
    let scale: Vec<f64> =
        (0..c).map(|ch| params.gamma.data()[ch] * cache.inv_std[ch]).collect();
    let mean_dy: Vec<f64> = sum_dy.iter().map(|s| s / mf).collect();
    let mean_dy_xhat: Vec<f64> = sum_dy_xhat.iter().map(|s| s / mf).collect();
    let mut din = Tensor::zeros(dout.shape());
    for ((din_row, dy_row), xh_row) in din
        .data_mut()
        .chunks_exact_mut(c)
        .zip(dy.chunks_exact(c))
        .zip(xhat.chunks_exact(c))
    {
        for ch in 0..c {
            din_row[ch] = scale[ch] * (dy_row[ch] - mean_dy[ch] - xh_row[ch] * mean_dy_xhat[ch]);
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_stats_inference_is_near_identity() {
        let params = BatchNormParams::new(3, 1e-3, 0.99);
        let input = Tensor::from_fn(&[4, 4, 3], |i| (i as f64).sin());
        let out = batchnorm_infer(&input, &params).unwrap();
        // only the epsilon term perturbs the output
        let expected_scale = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i * expected_scale).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_trains_to_beta() {
        let mut params = BatchNormParams::new(2, 1e-3, 0.99);
        params.beta = Tensor::new(vec![2], vec![0.7, -0.3]).unwrap();
        let input = Tensor::from_fn(&[2, 4, 4, 2], |i| if i % 2 == 0 { 5.0 } else { -2.0 });
        let (out, _) = batchnorm_train(&input, &params).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            let b = params.beta.data()[i % 2];
            assert!((v - b).abs() < 1e-9, "zero-variance channel should emit beta");
        }
    }

    #[test]
    fn batch_statistics_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = BatchNormParams::new(4, 1e-3, 0.99);
        let input = Tensor::from_fn(&[2, 4, 4, 4], |_| rng.gen_range(-3.0..3.0));
        let (out, _) = batchnorm_train(&input, &params).unwrap();
        let c = 4;
        let m = out.len() / c;
        for ch in 0..c {
            let vals: Vec<f64> =
                out.data().iter().enumerate().filter(|(i, _)| i % c == ch).map(|(_, &v)| v).collect();
            let mean: f64 = vals.iter().sum::<f64>() / m as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-10);
            // epsilon shrinks the variance slightly below 1
            assert!((var - 1.0).abs() < 1e-3 + 1e-6, "var {var}");
        }
    }

    #[test]
    fn moving_stats_blend_toward_batch() {
        let mut params = BatchNormParams::new(1, 1e-3, 0.9);
        let input = Tensor::from_fn(&[2, 2, 2, 1], |i| i as f64);
        let out = batchnorm_forward(&input, &mut params, BnMode::Training).unwrap();
        assert_eq!(out.shape(), input.shape());
        let batch_mean = 3.5;
        assert!((params.moving_mean.data()[0] - (0.9 * 0.0 + 0.1 * batch_mean)).abs() < 1e-12);
        assert!(params.moving_var.data()[0] > 1.0); // blended toward batch var 5.25
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let params = BatchNormParams::new(3, 1e-3, 0.99);
        assert!(batchnorm_infer(&Tensor::zeros(&[2, 2, 4]), &params).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = BatchNormParams::new(3, 1e-3, 0.99);
        params.gamma = Tensor::from_fn(&[3], |_| rng.gen_range(0.5..1.5));
        params.beta = Tensor::from_fn(&[3], |_| rng.gen_range(-0.5..0.5));
        let input = Tensor::from_fn(&[2, 3, 3, 3], |_| rng.gen_range(-2.0..2.0));
        let obj = Tensor::from_fn(&[2, 3, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let loss = |inp: &Tensor, pr: &BatchNormParams| -> f64 {
            let (out, _) = batchnorm_train(inp, pr).unwrap();
            out.data().iter().zip(obj.data()).map(|(o, w)| o * w).sum()
        };

        let (_, cache) = batchnorm_train(&input, &params).unwrap();
        let mut dgamma = Tensor::zeros(&[3]);
        let mut dbeta = Tensor::zeros(&[3]);
        let din = batchnorm_backward(&cache, &params, &obj, &mut dgamma, &mut dbeta);

        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!((analytic - numeric).abs() / denom < 1e-5, "{analytic} vs {numeric}");
        };
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += h;
            let mut minus = input.clone();
            minus.data_mut()[i] -= h;
            check(din.data()[i], (loss(&plus, &params) - loss(&minus, &params)) / (2.0 * h));
        }
        for i in 0..3 {
            let mut plus = params.clone();
            plus.gamma.data_mut()[i] += h;
            let mut minus = params.clone();
            minus.gamma.data_mut()[i] -= h;
            check(dgamma.data()[i], (loss(&input, &plus) - loss(&input, &minus)) / (2.0 * h));

            let mut plus = params.clone();
            plus.beta.data_mut()[i] += h;
            let mut minus = params.clone();
            minus.beta.data_mut()[i] -= h;
            check(dbeta.data()[i], (loss(&input, &plus) - loss(&input, &minus)) / (2.0 * h));
        }
    }
}
