//! Elementwise activation, pooling and the linear classifier head.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Masks the upstream gradient by the sign of the pre-activation.
pub fn relu_backward(pre_activation: &Tensor, dout: &Tensor) -> Tensor {
    assert_eq!(pre_activation.shape(), dout.shape());
    let mut din = dout.clone();
    for (d, &p) in din.data_mut().iter_mut().zip(pre_activation.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    din
}

/// Per-channel spatial mean: `[h, w, c] -> [c]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch { expected: "[h, w, c]".into(), got: format!("{s:?}") });
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    let mut out = Tensor::zeros(&[c]);
    for y in 0..h {
        for x in 0..w {
            let row = &input.data()[(y * w + x) * c..(y * w + x + 1) * c];
            for (o, v) in out.data_mut().iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    let inv = 1.0 / (h * w) as f64;
    for o in out.data_mut() {
        *o *= inv;
    }
    Ok(out)
}

/// Spreads the channel gradient evenly over the pooled window.
pub fn global_avg_pool_backward(h: usize, w: usize, dout: &Tensor) -> Tensor {
    let c = dout.len();
    let inv = 1.0 / (h * w) as f64;
    let mut out = Tensor::zeros(&[h, w, c]);
    for row in out.data_mut().chunks_exact_mut(c) {
        for (o, &d) in row.iter_mut().zip(dout.data()) {
            *o = d * inv;
        }
    }
    out
}

/// Fully connected layer: `out = input^T * weights + bias`, weights `[c, k]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = input.len();
    let ws = weights.shape();
    if ws.len() != 2 || ws[0] != c {
        return Err(Error::shape_of(&[c, bias.len()], ws));
    }
    let k = ws[1];
    if bias.len() != k {
        return Err(Error::shape_of(&[k], bias.shape()));
    }
    let mut out = bias.clone();
    for (i, &v) in input.data().iter().enumerate() {
        let row = &weights.data()[i * k..(i + 1) * k];
        for (o, wv) in out.data_mut().iter_mut().zip(row) {
            *o += v * wv;
        }
    }
    Ok(out)
}

/// Backward pass for the dense layer: returns the input gradient and
/// accumulates weight/bias gradients.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
    dweights: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let c = input.len();
    let k = dout.len();
    let mut din = Tensor::zeros(&[c]);
    for (o, d) in dbias.data_mut().iter_mut().zip(dout.data()) {
        *o += d;
    }
    for i in 0..c {
        let v = input.data()[i];
        let w_row = &weights.data()[i * k..(i + 1) * k];
        let dw_row = &mut dweights.data_mut()[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for j in 0..k {
            dw_row[j] += v * dout.data()[j];
            acc += w_row[j] * dout.data()[j];
        }
        din.data_mut()[i] = acc;
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_basic_cases() {
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::filled(&[2, 2, 2], -3.5);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tensor::from_fn(&[8, 8, 2], |_| rng.gen_range(-5.0..5.0));
        let once = relu(&t);
        assert_eq!(relu(&once), once);
    }

    #[test]
    fn gap_constant_and_arithmetic_mean() {
        let t = Tensor::filled(&[8, 8, 3], 4.25);
        let p = global_avg_pool(&t).unwrap();
        assert_eq!(p.data(), &[4.25, 4.25, 4.25]);

        let q = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&q).unwrap().data(), &[2.5]);
    }

    #[test]
    fn gap_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = Tensor::from_fn(&[8, 8, 32], |_| rng.gen_range(-10.0..10.0));
        let p = global_avg_pool(&t).unwrap();
        for c in 0..32 {
            let mut sum = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    sum += t.at3(y, x, c);
                }
            }
            assert!((p.data()[c] - sum / 64.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::from_fn(&[4, 4, 3], |_| rng.gen_range(-1.0..1.0));
        let b = Tensor::from_fn(&[4, 4, 3], |_| rng.gen_range(-1.0..1.0));
        let (ca, cb) = (2.5, -0.75);
        let mixed = Tensor::from_fn(&[4, 4, 3], |i| ca * a.data()[i] + cb * b.data()[i]);
        let lhs = global_avg_pool(&mixed).unwrap();
        let pa = global_avg_pool(&a).unwrap();
        let pb = global_avg_pool(&b).unwrap();
        for c in 0..3 {
            assert!((lhs.data()[c] - (ca * pa.data()[c] + cb * pb.data()[c])).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_identity_and_zero_input() {
        let ident = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let x = Tensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap();
        let out = dense(&x, &ident, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.data(), x.data());

        let bias = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let out = dense(&Tensor::zeros(&[3]), &ident, &bias).unwrap();
        assert_eq!(out.data(), bias.data());
    }

    #[test]
    fn dense_matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::from_fn(&[32], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(&[32, 7], |_| rng.gen_range(-1.0..1.0));
        let b = Tensor::from_fn(&[7], |_| rng.gen_range(-1.0..1.0));
        let out = dense(&x, &w, &b).unwrap();
        for k in 0..7 {
            let mut acc = b.data()[k];
            for c in 0..32 {
                acc += x.data()[c] * w.data()[c * 7 + k];
            }
            assert!((out.data()[k] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_shape_mismatch_errors() {
        let x = Tensor::zeros(&[4]);
        let w = Tensor::zeros(&[3, 7]);
        assert!(dense(&x, &w, &Tensor::zeros(&[7])).is_err());
        let w = Tensor::zeros(&[4, 7]);
        assert!(dense(&x, &w, &Tensor::zeros(&[6])).is_err());
    }
}
