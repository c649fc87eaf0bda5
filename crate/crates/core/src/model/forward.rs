//! Forward inference and the training-mode forward/backward composition.
//!
//! Training batches are rank-4 `[n, h, w, c]` tensors. Per-sample work is
//! parallelized over fixed-size sample chunks and partial gradients are
//! reduced in chunk order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d_grouped, dense, dense_backward,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, softmax_cross_entropy,
    softmax_probs, BnCache,
};
use crate::tensor::Tensor;

use super::Model;

/// Samples per parallel gradient chunk. Fixed (not thread-count derived) so
/// the reduction order is stable.
const GRAD_CHUNK: usize = 16;

/// Gradients of every learnable tensor, in [`Model::param_tensors`] order.
#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub blocks: Vec<ConvBlockGrads>,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvBlockGrads {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ModelGradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            blocks: model
                .blocks
                .iter()
                .map(|b| ConvBlockGrads {
                    kernel: Tensor::zeros(b.conv.kernel.shape()),
                    bias: Tensor::zeros(b.conv.bias.shape()),
                    gamma: Tensor::zeros(b.bn.gamma.shape()),
                    beta: Tensor::zeros(b.bn.beta.shape()),
                })
                .collect(),
            dense_weights: Tensor::zeros(model.dense_weights.shape()),
            dense_bias: Tensor::zeros(model.dense_bias.shape()),
        }
    }

    /// Tensors in the same order as [`Model::param_tensors`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            v.push(&b.kernel);
            v.push(&b.bias);
            v.push(&b.gamma);
            v.push(&b.beta);
        }
        v.push(&self.dense_weights);
        v.push(&self.dense_bias);
        v
    }
}

/// Intermediate values kept by the training forward pass.
pub struct ForwardCache {
    /// Input batch of each convolution (element 0 is the network input).
    block_inputs: Vec<Tensor>,
    bn_caches: Vec<BnCache>,
    /// Normalized pre-activation of each block (the ReLU inputs).
    bn_outputs: Vec<Tensor>,
    pub embeddings: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
    /// Mean cross-entropy over the batch, without the weight penalty.
    pub mean_data_loss: f64,
}

impl ForwardCache {
    /// Batch statistics for the running-stat update, per block.
    pub fn bn_caches(&self) -> &[BnCache] {
        &self.bn_caches
    }
}

fn batch_dims(input: &Tensor, model: &Model) -> Result<(usize, usize, usize, usize)> {
    let s = input.shape();
    let want = [model.config.height, model.config.width, model.config.input_channels()];
    if s.len() != 4 || s[1] != want[0] || s[2] != want[1] || s[3] != want[2] {
        return Err(Error::ShapeMismatch {
            expected: format!("[n, {}, {}, {}]", want[0], want[1], want[2]),
            got: format!("{s:?}"),
        });
    }
    Ok((s[0], s[1], s[2], s[3]))
}

/// Applies the convolution to every sample of a rank-4 batch.
fn conv_forward_batch(
    input: &Tensor,
    h: usize,
    w: usize,
    params: &crate::nn::ConvLayerParams,
) -> Tensor {
    let n = input.shape()[0];
    let in_stride = h * w * params.cin();
    let out_stride = h * w * params.cout();
    let mut out = Tensor::zeros(&[n, h, w, params.cout()]);
    out.data_mut()
        .par_chunks_mut(GRAD_CHUNK * out_stride)
        .zip(input.data().par_chunks(GRAD_CHUNK * in_stride))
        .for_each(|(o_chunk, i_chunk)| {
            for (o, i) in o_chunk.chunks_exact_mut(out_stride).zip(i_chunk.chunks_exact(in_stride))
            {
                crate::nn::conv::conv_forward_into(i, h, w, params, o);
            }
        });
    out
}

/// Batched convolution backward. Kernel/bias gradients are accumulated from
/// per-chunk partials summed in chunk order.
fn conv_backward_batch(
    input: &Tensor,
    h: usize,
    w: usize,
    params: &crate::nn::ConvLayerParams,
    dout: &Tensor,
    dkernel: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let in_stride = h * w * params.cin();
    let out_stride = h * w * params.cout();
    let mut din = Tensor::zeros(input.shape());

    let partials: Vec<(Tensor, Tensor)> = din
        .data_mut()
        .par_chunks_mut(GRAD_CHUNK * in_stride)
        .zip(input.data().par_chunks(GRAD_CHUNK * in_stride))
        .zip(dout.data().par_chunks(GRAD_CHUNK * out_stride))
        .map(|((din_c, in_c), dout_c)| {
            let mut gk = Tensor::zeros(params.kernel.shape());
            let mut gb = Tensor::zeros(&[params.cout()]);
            let samples = in_c.len() / in_stride;
            for s in 0..samples {
                crate::nn::conv::conv_backward_into(
                    &in_c[s * in_stride..(s + 1) * in_stride],
                    h,
                    w,
                    params,
                    &dout_c[s * out_stride..(s + 1) * out_stride],
                    &mut din_c[s * in_stride..(s + 1) * in_stride],
                    gk.data_mut(),
                    gb.data_mut(),
                );
            }
            (gk, gb)
        })
        .collect();

    for (gk, gb) in partials {
        for (a, b) in dkernel.data_mut().iter_mut().zip(gk.data()) {
            *a += b;
        }
        for (a, b) in dbias.data_mut().iter_mut().zip(gb.data()) {
            *a += b;
        }
    }
    din
}

impl Model {
    /// Inference embedding: three conv/norm/ReLU blocks then the spatial mean.
    /// Input must already be normalized with [`Model::norm_stats`].
    pub fn extract_embedding(&self, input: &Tensor) -> Result<Tensor> {
        let want = [self.config.height, self.config.width, self.config.input_channels()];
        if input.shape() != want {
            return Err(Error::shape_of(&want, input.shape()));
        }
        let mut x = input.clone();
        for block in &self.blocks {
            let pre = conv2d_grouped(&x, &block.conv)?;
            let normed = batchnorm_infer(&pre, &block.bn)?;
            x = relu(&normed);
        }
        global_avg_pool(&x)
    }

    /// Classifier logits for one normalized sample.
    pub fn infer_logits(&self, input: &Tensor) -> Result<Tensor> {
        let embedding = self.extract_embedding(input)?;
        dense(&embedding, &self.dense_weights, &self.dense_bias)
    }

    /// Class probabilities for one normalized sample.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        Ok(softmax_probs(&self.infer_logits(input)?))
    }

    /// Training-mode forward over a batch. Pure: running statistics are not
    /// touched; apply [`ForwardCache::bn_caches`] via the training loop.
    pub fn forward_train(&self, batch: &Tensor, labels: &[usize]) -> Result<ForwardCache> {
        let (n, h, w, _) = batch_dims(batch, self)?;
        if labels.len() != n {
            return Err(Error::shape_of(&[n], &[labels.len()]));
        }
        let k = self.config.num_classes;

        let mut block_inputs = Vec::with_capacity(3);
        let mut bn_caches = Vec::with_capacity(3);
        let mut bn_outputs = Vec::with_capacity(3);
        let mut x = batch.clone();
        for block in &self.blocks {
            let pre = conv_forward_batch(&x, h, w, &block.conv);
            block_inputs.push(x);
            let (normed, cache) = batchnorm_train(&pre, &block.bn)?;
            x = relu(&normed);
            bn_caches.push(cache);
            bn_outputs.push(normed);
        }

        let embed_dim = self.config.filters[2];
        let feat_stride = h * w * embed_dim;
        let inv_cells = 1.0 / (h * w) as f64;
        let mut embeddings = Tensor::zeros(&[n, embed_dim]);
        for (chunk, emb_row) in
            x.data().chunks_exact(feat_stride).zip(embeddings.data_mut().chunks_exact_mut(embed_dim))
        {
            for px in chunk.chunks_exact(embed_dim) {
                for (e, v) in emb_row.iter_mut().zip(px) {
                    *e += v;
                }
            }
            for e in emb_row.iter_mut() {
                *e *= inv_cells;
            }
        }

        let mut logits = Tensor::zeros(&[n, k]);
        let mut probs = Tensor::zeros(&[n, k]);
        let mut loss_sum = 0.0;
        for s in 0..n {
            let emb = Tensor::new(
                vec![embed_dim],
                embeddings.data()[s * embed_dim..(s + 1) * embed_dim].to_vec(),
            )?;
            let out = dense(&emb, &self.dense_weights, &self.dense_bias)?;
            let (loss, p) = softmax_cross_entropy(&out, labels[s], 0.0)?;
            loss_sum += loss;
            logits.data_mut()[s * k..(s + 1) * k].copy_from_slice(out.data());
            probs.data_mut()[s * k..(s + 1) * k].copy_from_slice(p.data());
        }

        Ok(ForwardCache {
            block_inputs,
            bn_caches,
            bn_outputs,
            embeddings,
            logits,
            probs,
            mean_data_loss: loss_sum / n as f64,
        })
    }

    /// Total training loss: mean cross-entropy plus `l2_lambda` times the sum
    /// of squared conv/dense weights.
    pub fn training_loss(&self, batch: &Tensor, labels: &[usize], l2_lambda: f64) -> Result<f64> {
        let cache = self.forward_train(batch, labels)?;
        Ok(cache.mean_data_loss + l2_lambda * self.weight_sum_sq())
    }

    /// Gradients of the mean batch loss (including the weight penalty) with
    /// respect to every learnable tensor.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        l2_lambda: f64,
    ) -> Result<ModelGradients> {
        let n = cache.block_inputs[0].shape()[0];
        if labels.len() != n {
            return Err(Error::shape_of(&[n], &[labels.len()]));
        }
        let (h, w) = (self.config.height, self.config.width);
        let k = self.config.num_classes;
        let embed_dim = self.config.filters[2];
        let mut grads = ModelGradients::zeros_like(self);

        // softmax + cross-entropy over the batch mean
        let inv_n = 1.0 / n as f64;
        let mut dlogits = cache.probs.clone();
        for (s, &label) in labels.iter().enumerate() {
            dlogits.data_mut()[s * k + label] -= 1.0;
        }
        for d in dlogits.data_mut() {
            *d *= inv_n;
        }

        // classifier
        let mut dfeat = Tensor::zeros(&[n, h, w, embed_dim]);
        let feat_stride = h * w * embed_dim;
        for s in 0..n {
            let emb = Tensor::new(
                vec![embed_dim],
                cache.embeddings.data()[s * embed_dim..(s + 1) * embed_dim].to_vec(),
            )?;
            let dl = Tensor::new(vec![k], dlogits.data()[s * k..(s + 1) * k].to_vec())?;
            let demb = dense_backward(
                &emb,
                &self.dense_weights,
                &dl,
                &mut grads.dense_weights,
                &mut grads.dense_bias,
            );
            let spread = global_avg_pool_backward(h, w, &demb);
            dfeat.data_mut()[s * feat_stride..(s + 1) * feat_stride]
                .copy_from_slice(spread.data());
        }

        // stem, last block first
        let mut dx = dfeat;
        for i in (0..self.blocks.len()).rev() {
            let block = &self.blocks[i];
            let bg = &mut grads.blocks[i];
            let drelu = relu_backward(&cache.bn_outputs[i], &dx);
            let dpre =
                batchnorm_backward(&cache.bn_caches[i], &block.bn, &drelu, &mut bg.gamma, &mut bg.beta);
            dx = conv_backward_batch(
                &cache.block_inputs[i],
                h,
                w,
                &block.conv,
                &dpre,
                &mut bg.kernel,
                &mut bg.bias,
            );
        }

        // weight decay on conv/dense weights only
        if l2_lambda != 0.0 {
            for (i, block) in self.blocks.iter().enumerate() {
                for (g, &wv) in grads.blocks[i]
                    .kernel
                    .data_mut()
                    .iter_mut()
                    .zip(block.conv.kernel.data())
                {
                    *g += 2.0 * l2_lambda * wv;
                }
            }
            for (g, &wv) in
                grads.dense_weights.data_mut().iter_mut().zip(self.dense_weights.data())
            {
                *g += 2.0 * l2_lambda * wv;
            }
        }
        Ok(grads)
    }
}
