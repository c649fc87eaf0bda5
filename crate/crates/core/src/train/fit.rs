//! Fold training loop and cross-validation driver.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_normalization, Dataset, FramePair};
use crate::error::{Error, Result};
use crate::model::{build_model, Model, ModelConfig};
use crate::nn::{softmax_cross_entropy, update_moving_stats};
use crate::tensor::Tensor;

use super::{augment::hflip, fold_seed, kfold::FoldSplit, stratified_kfold, AdamState, TrainConfig};

/// Losses recorded for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-epoch loss trace and the early-stopping outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains one model on a fold: Adam over shuffled mini-batches with
/// on-the-fly horizontal flips, validation loss monitored on the fold's
/// holdout, and the best-epoch weights restored at the end.
///
/// Normalization statistics come from the training indices only.
pub fn train_fold(
    dataset: &Dataset,
    split: &FoldSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train_config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if split.validation.is_empty() {
        return Err(Error::EmptyInput("early-stopping holdout"));
    }
    let strategy = model_config.strategy;
    for &i in split.train.iter().chain(&split.validation).chain(&split.test) {
        let label = dataset.samples[i].label as usize;
        if label >= model_config.num_classes {
            return Err(Error::InvalidLabel { value: label, num_classes: model_config.num_classes });
        }
    }

    let train_frames: Vec<&FramePair> = split.train.iter().map(|&i| &dataset.samples[i]).collect();
    let stats = crate::data::compute_normalization(&train_frames, strategy)?;

    // inputs and their mirrored variants, normalized once
    let train_inputs: Vec<Tensor> = train_frames
        .iter()
        .map(|f| apply_normalization(f, strategy, &stats))
        .collect::<Result<_>>()?;
    let train_flipped: Vec<Tensor> = train_frames
        .iter()
        .map(|f| apply_normalization(&hflip(f), strategy, &stats))
        .collect::<Result<_>>()?;
    let train_labels: Vec<usize> = split.train.iter().map(|&i| dataset.samples[i].label as usize).collect();

    let val_inputs: Vec<Tensor> = split
        .validation
        .iter()
        .map(|&i| apply_normalization(&dataset.samples[i], strategy, &stats))
        .collect::<Result<_>>()?;
    let val_labels: Vec<usize> =
        split.validation.iter().map(|&i| dataset.samples[i].label as usize).collect();

    let seed = fold_seed(train_config.seed, split.fold);
    let mut model = build_model(model_config, seed)?;
    model.norm_stats = stats;
    let mut adam = AdamState::for_tensors(&model.param_tensors());

    let n_train = train_inputs.len();
    let sample_len = train_inputs[0].len();
    let (h, w, c) =
        (model_config.height, model_config.width, model_config.input_channels());

    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, stopped_early: false };
    let mut best: Option<(f64, Model)> = None;
    let mut strikes = 0usize;

    for epoch in 0..train_config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64 + 1);

        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng);
        let flips: Vec<bool> = order
            .iter()
            .map(|_| train_config.flip_probability > 0.0 && rng.gen_bool(train_config.flip_probability))
            .collect();

        let mut loss_acc = 0.0;
        for (batch_ids, batch_flips) in
            order.chunks(train_config.batch_size).zip(flips.chunks(train_config.batch_size))
        {
            let n = batch_ids.len();
            let mut batch = Tensor::zeros(&[n, h, w, c]);
            let mut labels = Vec::with_capacity(n);
            for (slot, (&idx, &flip)) in batch_ids.iter().zip(batch_flips).enumerate() {
                let src = if flip { &train_flipped[idx] } else { &train_inputs[idx] };
                batch.data_mut()[slot * sample_len..(slot + 1) * sample_len]
                    .copy_from_slice(src.data());
                labels.push(train_labels[idx]);
            }

            let cache = model.forward_train(&batch, &labels)?;
            let grads = model.backward(&cache, &labels, train_config.l2_lambda)?;
            for (block, bn_cache) in model.blocks.iter_mut().zip(cache.bn_caches()) {
                update_moving_stats(&mut block.bn, bn_cache);
            }
            let grad_tensors = grads.tensors();
            let mut params = model.param_tensors_mut();
            adam.step(&mut params, &grad_tensors, train_config.learning_rate)?;
            loss_acc += cache.mean_data_loss * n as f64;
        }

        let penalty = train_config.l2_lambda * model.weight_sum_sq();
        let train_loss = loss_acc / n_train as f64 + penalty;
        // the monitored quantity is the holdout cross-entropy alone; the
        // weight penalty is part of the objective, not of generalization
        let val_loss = mean_ce_loss(&model, &val_inputs, &val_labels)?;
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });

        let improved =
            best.as_ref().map_or(true, |(b, _)| val_loss < *b - train_config.min_delta);
        if improved {
            best = Some((val_loss, model.clone()));
            history.best_epoch = epoch;
            strikes = 0;
        } else {
            strikes += 1;
            if strikes > train_config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

/// Mean inference-mode cross-entropy over a sample set.
fn mean_ce_loss(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
    let losses: Vec<f64> = inputs
        .par_iter()
        .zip(labels)
        .map(|(input, &label)| {
            let logits = model.infer_logits(input)?;
            Ok(softmax_cross_entropy(&logits, label, 0.0)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Top-1 accuracy of a model over the given dataset indices.
pub fn test_accuracy(model: &Model, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("test indices"));
    }
    let correct: usize = indices
        .par_iter()
        .map(|&i| {
            let sample = &dataset.samples[i];
            let input =
                apply_normalization(sample, model.config.strategy, &model.norm_stats)?;
            let probs = model.predict(&input)?;
            Ok(usize::from(argmax(probs.data()) == sample.label as usize))
        })
        .collect::<Result<Vec<usize>>>()?
        .iter()
        .sum();
    Ok(correct as f64 / indices.len() as f64)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean and population standard deviation.
pub fn aggregate_accuracies(accuracies: &[f64]) -> (f64, f64) {
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One fold's outcome within a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_accuracy: f64,
    pub epochs_trained: usize,
    pub best_epoch: usize,
}

/// Cross-validation result: one trained model per fold plus the accuracy
/// aggregate.
#[derive(Debug, Clone)]
pub struct CrossValidationResult {
    pub outcomes: Vec<FoldOutcome>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub models: Vec<Model>,
}

/// Trains one model per stratified fold and reports test accuracies. The
/// splits depend only on the labels, fold count and seed, so every strategy
/// compared under the same dataset and seed sees identical folds.
pub fn cross_validate(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    k: usize,
) -> Result<CrossValidationResult> {
    let splits = stratified_kfold(
        &dataset.labels(),
        k,
        train_config.es_holdout_fraction,
        train_config.seed,
    )?;
    let per_fold: Vec<(Model, TrainHistory, f64)> = splits
        .par_iter()
        .map(|split| {
            let (model, history) = train_fold(dataset, split, model_config, train_config)?;
            let accuracy = test_accuracy(&model, dataset, &split.test)?;
            Ok((model, history, accuracy))
        })
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(k);
    let mut models = Vec::with_capacity(k);
    for (fold, (model, history, accuracy)) in per_fold.into_iter().enumerate() {
        outcomes.push(FoldOutcome {
            fold,
            test_accuracy: accuracy,
            epochs_trained: history.epochs.len(),
            best_epoch: history.best_epoch,
        });
        models.push(model);
    }
    let accuracies: Vec<f64> = outcomes.iter().map(|o| o.test_accuracy).collect();
    let (mean_accuracy, std_accuracy) = aggregate_accuracies(&accuracies);
    Ok(CrossValidationResult { outcomes, mean_accuracy, std_accuracy, models })
}

/// Machine-readable cross-validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub strategy: String,
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<FoldReportEntry>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReportEntry {
    pub fold: usize,
    pub test_accuracy: f64,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub checkpoint: Option<String>,
}

impl FoldReport {
    pub fn from_result(result: &CrossValidationResult, strategy: &str, seed: u64, k: usize) -> Self {
        Self {
            strategy: strategy.to_string(),
            seed,
            k,
            folds: result
                .outcomes
                .iter()
                .map(|o| FoldReportEntry {
                    fold: o.fold,
                    test_accuracy: o.test_accuracy,
                    epochs_trained: o.epochs_trained,
                    best_epoch: o.best_epoch,
                    checkpoint: None,
                })
                .collect(),
            mean_accuracy: result.mean_accuracy,
            std_accuracy: result.std_accuracy,
        }
    }
}
