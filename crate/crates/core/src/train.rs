//! Training loop: seeded shuffling, mini-batch Adam with per-sample
//! gradients computed in parallel and reduced in index order, and
//! early stopping on a stratified validation split.
//!
//! Per-sample work (gradients, evaluation) is pure: workers read the
//! shared parameter store, return values, and the reduction happens
//! sequentially in a fixed order. Results are therefore bit-identical
//! across thread counts and with the `parallel` feature disabled.

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamGrads;
use crate::data::{stratified_split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::{ConvTranNet, Phase};
use crate::optim::{Adam, EarlyStopper, StopDecision};
use crate::parallel::par_map;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of the train file held out for validation (stratified).
    pub val_fraction: f64,
    /// Apply per-sample z-normalization at ingestion.
    pub znormalize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            patience: 20,
            batch_size: 16,
            lr: 1e-3,
            val_fraction: 0.2,
            znormalize: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mean loss and summed gradients over one batch, workers in parallel,
/// reduction in sample order.
fn batch_gradients(
    net: &ConvTranNet,
    ds: &TimeSeriesDataset,
    batch: &[usize],
    epoch: usize,
    tc: &TrainConfig,
) -> Result<(f64, ParamGrads)> {
    let n_total = ds.n();
    let items: Vec<usize> = batch.to_vec();
    let results = par_map(items, |idx| {
        let stream = (epoch * n_total + idx) as u64;
        let mut rng = crate::rng_from_seed(crate::derive_seed(tc.seed, stream));
        let mut phase = Phase::Train {
            dropout_rng: &mut rng,
        };
        net.loss_and_gradients(&ds.samples[idx], ds.labels[idx], &mut phase)
    });
    let mut grads = ParamGrads::zeros(&net.params);
    let mut loss_sum = 0.0;
    for r in results {
        let (loss, g) = r?;
        loss_sum += loss;
        g.accumulate_into(&mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss_sum * inv, grads))
}

/// Classification accuracy over a dataset, eval mode.
pub fn evaluate(net: &ConvTranNet, ds: &TimeSeriesDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::InvalidArgument("evaluate on an empty dataset".into()));
    }
    let idx: Vec<usize> = (0..ds.n()).collect();
    let results = par_map(idx, |i| net.predict(&ds.samples[i]));
    let mut correct = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        if r? == ds.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.n() as f64)
}

/// Mean eval-mode cross-entropy over a dataset.
pub fn mean_loss(net: &ConvTranNet, ds: &TimeSeriesDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::InvalidArgument("loss of an empty dataset".into()));
    }
    let idx: Vec<usize> = (0..ds.n()).collect();
    let results = par_map(idx, |i| net.loss(&ds.samples[i], ds.labels[i]));
    let mut sum = 0.0;
    for r in results {
        sum += r?;
    }
    Ok(sum / ds.n() as f64)
}

/// Train with Adam and early stopping; on return the net carries the
/// parameters of the best validation epoch. The dataset is expected to
/// be normalized already if normalization is wanted.
pub fn fit(net: &mut ConvTranNet, train_set: &TimeSeriesDataset, tc: &TrainConfig) -> Result<FitReport> {
    if train_set.n() == 0 {
        return Err(Error::InvalidArgument("fit on an empty dataset".into()));
    }
    if tc.batch_size == 0 || tc.max_epochs == 0 {
        return Err(Error::InvalidArgument(
            "batch_size and max_epochs must be >= 1".into(),
        ));
    }
    let split_seed = crate::derive_seed(tc.seed, 0x5711);
    let (train, val, _warnings) = stratified_split(train_set, 1.0 - tc.val_fraction, split_seed)?;
    let mut adam = Adam::new(&net.params, tc.lr);
    let mut stopper = EarlyStopper::new(tc.patience);
    let mut epochs_run = 0;
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train.n()).collect();
    for epoch in 1..=tc.max_epochs {
        epochs_run = epoch;
        use rand::seq::SliceRandom;
        let mut shuffle_rng = crate::rng_from_seed(crate::derive_seed(tc.seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(tc.batch_size) {
            let (_loss, grads) = batch_gradients(net, &train, batch, epoch, tc)?;
            adam.step(&mut net.params, &grads)?;
        }

        let val_loss = if val.n() > 0 {
            mean_loss(net, &val)?
        } else {
            mean_loss(net, &train)?
        };
        match stopper.update(val_loss, &net.params)? {
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    stopper.restore_best(&mut net.params);
    Ok(FitReport {
        epochs_run,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        stopped_early,
    })
}

/// Convenience for tests: one Adam step on an arbitrary loss built from
/// a single sample, returning the loss value.
pub fn single_step(
    net: &mut ConvTranNet,
    x: &Tensor,
    label: usize,
    lr: f64,
) -> Result<f64> {
    let mut adam = Adam::new(&net.params, lr);
    let (loss, grads) = {
        let mut phase = Phase::Eval;
        net.loss_and_gradients(x, label, &mut phase)?
    };
    let mut acc = ParamGrads::zeros(&net.params);
    grads.accumulate_into(&mut acc)?;
    adam.step(&mut net.params, &acc)?;
    Ok(loss)
}
