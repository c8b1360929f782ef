//! Adam and validation-loss early stopping.

use crate::autodiff::{ParamGrads, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias correction. Moment buffers are aligned with the
/// parameter store they were created from.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        let v = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter. Gradients must be dense and
    /// aligned with the store this optimizer was built for.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "gradients for {} params, store has {}, optimizer tracks {}",
                grads.len(),
                store.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in store.ids() {
            let g = grads.get(id);
            if g.shape() != store.get(id).shape() {
                return Err(Error::shape(
                    "Adam::step",
                    format!("param {} vs grad {:?}", store.name(id), g.shape()),
                ));
            }
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(id);
            for k in 0..g.numel() {
                let gk = g.data()[k];
                let mk = self.beta1 * m.data()[k] + (1.0 - self.beta1) * gk;
                let vk = self.beta2 * v.data()[k] + (1.0 - self.beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                p.data_mut()[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// What the training loop should do after reporting a validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Tracks the best validation loss and a snapshot of the parameters
/// that produced it; stops after `patience` consecutive epochs without
/// improvement.
pub struct EarlyStopper {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    epochs_seen: usize,
    since_best: usize,
    best_snapshot: Option<Vec<Tensor>>,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_seen: 0,
            since_best: 0,
            best_snapshot: None,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Record one epoch's validation loss. A NaN loss is an error and
    /// the caller should abort training.
    pub fn update(&mut self, val_loss: f64, store: &ParamStore) -> Result<StopDecision> {
        if val_loss.is_nan() {
            return Err(Error::Numeric("validation loss is NaN".into()));
        }
        self.epochs_seen += 1;
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = self.epochs_seen;
            self.since_best = 0;
            self.best_snapshot = Some(store.snapshot());
            Ok(StopDecision::Continue)
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Ok(StopDecision::Stop)
            } else {
                Ok(StopDecision::Continue)
            }
        }
    }

    /// Restore the parameters from the best epoch seen so far.
    pub fn restore_best(&self, store: &mut ParamStore) {
        if let Some(snap) = &self.best_snapshot {
            store.restore(snap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;

    fn scalar_store(v: f64) -> (ParamStore, crate::autodiff::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::scalar(v));
        (s, id)
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let (mut store, id) = scalar_store(1.5);
        let mut adam = Adam::new(&store, 1e-3);
        let grads = ParamGrads::zeros(&store);
        adam.step(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).data()[0], 1.5);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        // Mirror of the update rule on a single scalar: with a constant
        // gradient every step must decrease the parameter by about lr.
        let (mut store, id) = scalar_store(0.0);
        let mut adam = Adam::new(&store, 1e-2);
        let mut grads = ParamGrads::zeros(&store);
        grads.get_mut(id).data_mut()[0] = 2.0;

        // Independent simulation of the same recurrence.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        let (lr, b1, b2, eps) = (1e-2, 0.9, 0.999, 1e-8);
        let mut prev = 0.0;
        for t in 1..=50u32 {
            adam.step(&mut store, &grads).unwrap();
            m = b1 * m + (1.0 - b1) * 2.0;
            v = b2 * v + (1.0 - b2) * 4.0;
            let mhat = m / (1.0 - b1.powi(t as i32));
            let vhat = v / (1.0 - b2.powi(t as i32));
            x -= lr * mhat / (vhat.sqrt() + eps);
            let got = store.get(id).data()[0];
            assert!((got - x).abs() < 1e-12, "step {t}: {got} vs {x}");
            assert!(got < prev, "parameter must move monotonically down");
            prev = got;
        }
    }

    #[test]
    fn identical_runs_take_identical_trajectories() {
        let run = || {
            let (mut store, id) = scalar_store(0.3);
            let mut adam = Adam::new(&store, 5e-3);
            let mut trace = Vec::new();
            for t in 0..20 {
                let mut grads = ParamGrads::zeros(&store);
                grads.get_mut(id).data_mut()[0] = (t as f64).sin() + 0.1;
                adam.step(&mut store, &grads).unwrap();
                trace.push(store.get(id).data()[0]);
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn strictly_decreasing_losses_never_stop() {
        let (store, _) = scalar_store(0.0);
        let mut stopper = EarlyStopper::new(3);
        for e in 0..50 {
            let d = stopper.update(1.0 / (e + 1) as f64, &store).unwrap();
            assert_eq!(d, StopDecision::Continue);
        }
    }

    #[test]
    fn flat_losses_stop_exactly_after_patience() {
        let (store, _) = scalar_store(0.0);
        let patience = 4;
        let mut stopper = EarlyStopper::new(patience);
        assert_eq!(stopper.update(1.0, &store).unwrap(), StopDecision::Continue);
        for k in 1..=patience {
            let d = stopper.update(1.0, &store).unwrap();
            if k < patience {
                assert_eq!(d, StopDecision::Continue, "epoch {}", k + 1);
            } else {
                assert_eq!(d, StopDecision::Stop, "epoch {}", k + 1);
            }
        }
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn nan_loss_is_an_error() {
        let (store, _) = scalar_store(0.0);
        let mut stopper = EarlyStopper::new(2);
        assert!(stopper.update(f64::NAN, &store).is_err());
    }

    #[test]
    fn restores_the_snapshot_from_the_minimum_epoch() {
        let (mut store, id) = scalar_store(0.0);
        let mut stopper = EarlyStopper::new(10);
        let losses = [0.9, 0.5, 0.7, 0.4, 0.8, 0.8];
        for (e, &l) in losses.iter().enumerate() {
            store.get_mut(id).data_mut()[0] = e as f64;
            stopper.update(l, &store).unwrap();
        }
        stopper.restore_best(&mut store);
        // Minimum was at epoch 4 (zero-based index 3).
        assert_eq!(store.get(id).data()[0], 3.0);
        assert_eq!(stopper.best_epoch(), 4);
    }
}
