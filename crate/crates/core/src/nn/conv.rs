//! Grouped 3x3 convolution with same padding and unit stride.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed kernel side length for the backbone.
pub const KERNEL_SIZE: usize = 3;

/// Weights of one grouped convolution layer.
///
/// The kernel is stored as `[3, 3, cin/groups, cout]` row-major. Output
/// channel block `g` (of `cout/groups` channels) convolves input channel
/// block `g` (of `cin/groups` channels); `groups == 1` is a standard dense
/// convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerParams {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub groups: usize,
}

impl ConvLayerParams {
    pub fn new(kernel: Tensor, bias: Tensor, groups: usize) -> Result<Self> {
        let ks = kernel.shape();
        if ks.len() != 4 || ks[0] != KERNEL_SIZE || ks[1] != KERNEL_SIZE {
            return Err(Error::ShapeMismatch {
                expected: format!("[{KERNEL_SIZE}, {KERNEL_SIZE}, cin/groups, cout]"),
                got: format!("{ks:?}"),
            });
        }
        let cout = ks[3];
        if groups == 0 || cout % groups != 0 {
            return Err(Error::InvalidGroups { groups, cin: ks[2] * groups.max(1), cout });
        }
        if bias.shape() != [cout] {
            return Err(Error::shape_of(&[cout], bias.shape()));
        }
        Ok(Self { kernel, bias, groups })
    }

    /// Total input channels consumed by the layer.
    pub fn cin(&self) -> usize {
        self.kernel.shape()[2] * self.groups
    }

    /// Output channel count.
    pub fn cout(&self) -> usize {
        self.kernel.shape()[3]
    }

    pub fn cin_per_group(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn cout_per_group(&self) -> usize {
        self.cout() / self.groups
    }
}

/// Gradients of one convolution layer.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub kernel: Tensor,
    pub bias: Tensor,
}

fn check_input(input: &Tensor, params: &ConvLayerParams) -> Result<(usize, usize)> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            expected: "[h, w, cin]".into(),
            got: format!("{s:?}"),
        });
    }
    if s[2] != params.cin() {
        return Err(Error::shape_of(&[s[0], s[1], params.cin()], s));
    }
    Ok((s[0], s[1]))
}

/// Grouped convolution over one `[h, w, cin]` sample, producing `[h, w, cout]`.
///
/// Same padding: out-of-bounds taps read zero. Each output element is the
/// sum over taps, then group input channels, then output channels within the
/// group, always in that order.
pub fn conv2d_grouped(input: &Tensor, params: &ConvLayerParams) -> Result<Tensor> {
    let (h, w) = check_input(input, params)?;
    let mut out = Tensor::zeros(&[h, w, params.cout()]);
    conv_forward_into(
        input.data(),
        h,
        w,
        params,
        out.data_mut(),
    );
    Ok(out)
}

/// Forward kernel on raw buffers, shared by the single-sample and batched
/// paths. One branchless rectangular pass per kernel tap; each output
/// element's summation order (tap, then group channel) is fixed.
pub(crate) fn conv_forward_into(
    input: &[f64],
    h: usize,
    w: usize,
    params: &ConvLayerParams,
    out: &mut [f64],
) {
    let cin = params.cin();
    let cout = params.cout();
    let cpg = params.cin_per_group();
    let opg = params.cout_per_group();
    let kw_data = params.kernel.data();
    let bias = params.bias.data();

    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(bias);
    }

    for kh in 0..KERNEL_SIZE {
        let dy = kh as isize - 1;
        let y0 = (-dy).max(0) as usize;
        let y1 = ((h as isize - dy).min(h as isize)) as usize;
        for kw in 0..KERNEL_SIZE {
            let dx = kw as isize - 1;
            let x0 = (-dx).max(0) as usize;
            let x1 = ((w as isize - dx).min(w as isize)) as usize;
            let tap_base = (kh * KERNEL_SIZE + kw) * cpg;
            for y in y0..y1 {
                let iy = (y as isize + dy) as usize;
                let in_row = &input[(iy * w) * cin..(iy * w + w) * cin];
                let out_row = &mut out[(y * w) * cout..(y * w + w) * cout];
                for x in x0..x1 {
                    let ix = (x as isize + dx) as usize;
                    let in_px = &in_row[ix * cin..(ix + 1) * cin];
                    let out_px = &mut out_row[x * cout..(x + 1) * cout];
                    for cl in 0..cpg {
                        let w_row = &kw_data[(tap_base + cl) * cout..(tap_base + cl + 1) * cout];
                        for g in 0..params.groups {
                            let in_val = in_px[g * cpg + cl];
                            let co0 = g * opg;
                            for (a, wv) in
                                out_px[co0..co0 + opg].iter_mut().zip(&w_row[co0..co0 + opg])
                            {
                                *a += in_val * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Backward pass for one sample: returns the input gradient and accumulates
/// kernel/bias gradients into `grads`.
pub fn conv2d_grouped_backward(
    input: &Tensor,
    params: &ConvLayerParams,
    dout: &Tensor,
    grads: &mut ConvGrads,
) -> Result<Tensor> {
    let (h, w) = check_input(input, params)?;
    if dout.shape() != [h, w, params.cout()] {
        return Err(Error::shape_of(&[h, w, params.cout()], dout.shape()));
    }
    let mut din = Tensor::zeros(input.shape());
    conv_backward_into(
        input.data(),
        h,
        w,
        params,
        dout.data(),
        din.data_mut(),
        grads.kernel.data_mut(),
        grads.bias.data_mut(),
    );
    Ok(din)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_into(
    input: &[f64],
    h: usize,
    w: usize,
    params: &ConvLayerParams,
    dout: &[f64],
    din: &mut [f64],
    dkernel: &mut [f64],
    dbias: &mut [f64],
) {
    let cin = params.cin();
    let cout = params.cout();
    let cpg = params.cin_per_group();
    let opg = params.cout_per_group();
    let kw_data = params.kernel.data();

    for dout_row in dout.chunks_exact(cout) {
        for (b, d) in dbias.iter_mut().zip(dout_row) {
            *b += d;
        }
    }

    for kh in 0..KERNEL_SIZE {
        let dy = kh as isize - 1;
        let y0 = (-dy).max(0) as usize;
        let y1 = ((h as isize - dy).min(h as isize)) as usize;
        for kw in 0..KERNEL_SIZE {
            let dx = kw as isize - 1;
            let x0 = (-dx).max(0) as usize;
            let x1 = ((w as isize - dx).min(w as isize)) as usize;
            let tap_base = (kh * KERNEL_SIZE + kw) * cpg;
            for y in y0..y1 {
                let iy = (y as isize + dy) as usize;
                for x in x0..x1 {
                    let ix = (x as isize + dx) as usize;
                    let in_base = (iy * w + ix) * cin;
                    let dout_row = &dout[(y * w + x) * cout..(y * w + x + 1) * cout];
                    for cl in 0..cpg {
                        let row0 = (tap_base + cl) * cout;
                        for g in 0..params.groups {
                            let ci = g * cpg + cl;
                            let in_val = input[in_base + ci];
                            let co0 = g * opg;
                            let dk_row = &mut dkernel[row0 + co0..row0 + co0 + opg];
                            let w_row = &kw_data[row0 + co0..row0 + co0 + opg];
                            let d_row = &dout_row[co0..co0 + opg];
                            for (dk, d) in dk_row.iter_mut().zip(d_row) {
                                *dk += in_val * d;
                            }
                            let mut grad_in = 0.0;
                            for (wv, d) in w_row.iter().zip(d_row) {
                                grad_in += wv * d;
                            }
                            din[in_base + ci] += grad_in;
                        }
                    }
                }
            }
        }
    }
}
