//! AdamW with decoupled weight decay and a reduce-on-plateau schedule.

use hbf_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::learner::network::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        AdamW {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update: `θ ← θ(1 − lr·wd)`, then the bias-corrected Adam step.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.tensors.len() {
            return Err(CoreError::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.tensors.len()
            )));
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - lr * c.weight_decay;
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensors[i].data_mut();
            let m = self.m.tensors[i].data_mut();
            let v = self.v.tensors[i].data_mut();
            if g.len() != p.len() {
                return Err(CoreError::Contract(format!(
                    "gradient {i} has {} entries, parameter {}",
                    g.len(),
                    p.len()
                )));
            }
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                *p *= decay;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the monitored value has
/// failed to improve (relative threshold `1e-4`) for more than `patience`
/// consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    /// Best value seen so far; `None` before the first epoch.
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Plateau {
            lr,
            factor,
            patience,
            threshold: 1e-4,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's value and returns the learning rate to use next.
    pub fn step(&mut self, value: f64) -> f64 {
        if self.best.is_none_or(|b| value < b - b.abs() * self.threshold) {
            self.best = Some(value);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            let next = self.lr * self.factor;
            if self.lr - next > 1e-8 {
                self.lr = next;
            }
            self.bad_epochs = 0;
        }
        self.lr
    }
}
