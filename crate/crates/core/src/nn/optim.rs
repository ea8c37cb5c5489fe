use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 2.5e-4, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamWState<T> {
    pub step: u64,
    m: Vec<Tensor2<T>>,
    v: Vec<Tensor2<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Tensor2<T>> =
            params.named_tensors().iter().map(|(_, t)| Tensor2::zeros(t.rows(), t.cols())).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One AdamW update with decoupled weight decay and bias-corrected moments.
/// `lr` overrides `hyper.lr` so a schedule can drive it.
pub fn adamw_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamWState<T>,
    hyper: &AdamWConfig,
    lr: f64,
) -> Result<()> {
    let named_grads = grads.named_tensors();
    for (name, g) in &named_grads {
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::c(hyper.beta1);
    let b2 = T::c(hyper.beta2);
    let one = T::one();
    let bc1 = T::c(1.0 - hyper.beta1.powi(t));
    let bc2 = T::c(1.0 - hyper.beta2.powi(t));
    let lr_t = T::c(lr);
    let decay = T::c(1.0 - lr * hyper.weight_decay);
    let eps = T::c(hyper.eps);

    for (i, (_, p)) in params.named_tensors_mut().into_iter().enumerate() {
        let g = named_grads[i].1.data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            *w *= decay;
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

pub fn global_norm<T: Scalar>(grads: &ModelParams<T>) -> T {
    grads.named_tensors().iter().map(|(_, t)| t.sum_sq()).sum::<T>().sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut ModelParams<T>, max_norm: f64) -> T {
    let norm = global_norm(grads);
    let max = T::c(max_norm);
    if norm > max {
        let k = max / norm;
        for (_, t) in grads.named_tensors_mut() {
            t.scale(k);
        }
    }
    norm
}

/// Halves the learning rate after two consecutive epochs without a validation
/// improvement larger than `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub min_lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        Self { lr, factor: 0.5, patience: 2, threshold: 1e-4, min_lr: 1e-6, best: None, bad_epochs: 0 }
    }

    /// Records one epoch's validation loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - self.threshold,
        };
        if improved {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                let next = (self.lr * self.factor).max(self.min_lr);
                if next < self.lr {
                    self.lr = next;
                }
                self.bad_epochs = 0;
            }
        }
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}
