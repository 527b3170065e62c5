//! Mini-batch training with AdamW, a plateau schedule and model selection
//! on the validation loss.

use hbf_autodiff::{ComplexTensor, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelBatch;
use crate::error::{CoreError, Result};
use crate::evaluate::{evaluate, summarize};
use crate::learner::features::{features, gather_complex, gather_rows, Standardizer};
use crate::learner::gumbel::GumbelNoise;
use crate::learner::infer::{infer, Model};
use crate::learner::network::{forward, Hidden, NetworkSpec, ParamSet};
use crate::learner::objective::{loss, Objective};
use crate::learner::optim::{AdamW, AdamWConfig, Plateau};

const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Hidden,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub adamw: AdamWConfig,
    pub seed: u64,
    /// Initial connection-logit bias.
    pub logit_bias: f64,
    /// Leading fraction of the data used for training; the rest validates.
    pub train_fraction: f64,
    pub standardize_gumbel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: Hidden::default(),
            epochs: 200,
            batch_size: 1000,
            lr: 5e-3,
            lr_factor: 0.4,
            lr_patience: 10,
            adamw: AdamWConfig::default(),
            seed: 0,
            logit_bias: 2.0,
            train_fraction: 0.85,
            standardize_gumbel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(CoreError::Domain(format!(
                "need batch_size > 0, lr > 0 and 0 < lr_factor < 1 (got {}, {}, {})",
                self.batch_size, self.lr, self.lr_factor
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CoreError::Domain(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Power weight interpolated log-linearly between 0.1 at a target of
/// 1 bit/s/Hz and 0.005 at 8 bit/s/Hz, clamped outside that range.
pub fn default_gamma(r_d: f64) -> f64 {
    let x = ((r_d - 1.0) / 7.0).clamp(0.0, 1.0);
    (0.1f64.ln() + x * (0.005f64.ln() - 0.1f64.ln())).exp()
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Relaxed quantities with deterministic gates on estimated CSI.
    pub val_sum_se: f64,
    pub val_power_w: f64,
    pub val_ee: f64,
    pub active_rf_expected: f64,
    pub lr: f64,
    /// Rounded model evaluated against the true channels.
    pub exact_sum_se: f64,
    pub exact_power_w: f64,
    pub exact_ee: f64,
    pub exact_active_rf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Model,
    /// Parameters at the best validation loss so far.
    pub best: ParamSet,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub optimizer: AdamW,
    pub scheduler: Plateau,
    /// Epochs completed.
    pub epoch: usize,
    pub history: Vec<MetricsRow>,
}

fn split(data: &ChannelBatch, fraction: f64) -> Result<usize> {
    let n_train = (data.n_samples as f64 * fraction).floor() as usize;
    if n_train == 0 || n_train == data.n_samples {
        return Err(CoreError::Contract(format!(
            "{} samples cannot be split {fraction} train / rest validation",
            data.n_samples
        )));
    }
    Ok(n_train)
}

impl TrainState {
    /// Fresh state: initialized network and statistics from the training split.
    pub fn start(config: TrainConfig, objective: Objective, data: &ChannelBatch) -> Result<Self> {
        config.validate()?;
        objective.validate()?;
        if data.n_antennas != objective.template.n_t {
            return Err(CoreError::Dimension(format!(
                "data has {} antennas, template {}",
                data.n_antennas, objective.template.n_t
            )));
        }
        let spec = NetworkSpec::new(&objective.template, data.n_users, config.hidden.clone())?;
        let n_train = split(data, config.train_fraction)?;
        let x = features(&gather_complex(&data.h_est, &(0..n_train).collect::<Vec<_>>()))?;
        let standardizer = Standardizer::fit(&x)?;
        let params = ParamSet::init(&spec, config.seed, config.logit_bias);
        let optimizer = AdamW::new(config.adamw, &params);
        let scheduler = Plateau::new(config.lr, config.lr_factor, config.lr_patience);
        Ok(TrainState {
            best: params.clone(),
            model: Model {
                spec,
                params,
                standardizer,
                objective,
            },
            config,
            best_val_loss: None,
            best_epoch: None,
            optimizer,
            scheduler,
            epoch: 0,
            history: Vec::new(),
        })
    }

    /// The selected model (best validation loss, or the current one before
    /// any epoch has run).
    pub fn best_model(&self) -> Model {
        Model {
            params: self.best.clone(),
            ..self.model.clone()
        }
    }

    /// Trains until `until` epochs have completed in total.
    pub fn run_epochs(
        &mut self,
        data: &ChannelBatch,
        until: usize,
        mut on_epoch: impl FnMut(&MetricsRow),
    ) -> Result<()> {
        let n_train = split(data, self.config.train_fraction)?;
        let x_all = self.model.standardizer.apply(&features(&data.h_est)?)?;
        let val_idx: Vec<usize> = (n_train..data.n_samples).collect();
        while self.epoch < until {
            let train_loss = self.train_epoch(&x_all, &data.h_est, n_train)?;
            let row = self.validate_epoch(&x_all, data, &val_idx, train_loss)?;
            let better = self.best_val_loss.is_none_or(|b| row.val_loss < b);
            if better {
                self.best_val_loss = Some(row.val_loss);
                self.best_epoch = Some(self.epoch);
                self.best = self.model.params.clone();
            }
            self.scheduler.step(row.val_loss);
            self.epoch += 1;
            on_epoch(&row);
            self.history.push(row);
        }
        Ok(())
    }

    fn train_epoch(&mut self, x_all: &Tensor, h_est: &ComplexTensor, n_train: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng);
        let lr = self.scheduler.lr;
        let (mut total, mut count) = (0.0, 0usize);
        for batch in order.chunks(self.config.batch_size) {
            let x = gather_rows(x_all, batch);
            let h = gather_complex(h_est, batch);
            let tape = Tape::new();
            let vars = self.model.params.on_tape(&tape, true);
            let heads = forward(&self.model.spec, &vars, tape.constant(x))?;
            let noise = GumbelNoise {
                rng: &mut rng,
                standardize: self.config.standardize_gumbel,
            };
            let terms = loss(&self.model.objective, &heads, &h, Some(noise))?;
            let value = terms.loss.item();
            if !value.is_finite() {
                return Err(CoreError::Numerical(format!(
                    "loss is {value} in epoch {}",
                    self.epoch
                )));
            }
            let grads = tape.backward(terms.loss)?;
            let g: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();
            if g.iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
                return Err(CoreError::Numerical(format!(
                    "non-finite gradient in epoch {}",
                    self.epoch
                )));
            }
            self.optimizer.update(&mut self.model.params, &g, lr)?;
            total += value * batch.len() as f64;
            count += batch.len();
        }
        Ok(total / count as f64)
    }

    fn validate_epoch(
        &self,
        x_all: &Tensor,
        data: &ChannelBatch,
        val_idx: &[usize],
        train_loss: f64,
    ) -> Result<MetricsRow> {
        let obj = &self.model.objective;
        let (mut loss_sum, mut se_sum, mut p_sum, mut ee_sum, mut rf_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for chunk in val_idx.chunks(EVAL_CHUNK) {
            let tape = Tape::new();
            let vars = self.model.params.on_tape(&tape, false);
            let heads = forward(&self.model.spec, &vars, tape.constant(gather_rows(x_all, chunk)))?;
            let terms = loss(obj, &heads, &gather_complex(&data.h_est, chunk), None)?;
            let n = chunk.len() as f64;
            loss_sum += terms.loss.item() * n;
            let (se, p, rf) = (terms.sum_se.value(), terms.power.value(), terms.active_rf.value());
            se_sum += se.sum();
            p_sum += p.sum();
            rf_sum += rf.sum();
            ee_sum += se
                .data()
                .iter()
                .zip(p.data())
                .map(|(s, p)| if *p > 0.0 { s / p } else { 0.0 })
                .sum::<f64>();
        }
        let n = val_idx.len() as f64;
        let val_loss = loss_sum / n;
        if !val_loss.is_finite() {
            return Err(CoreError::Numerical(format!(
                "validation loss is {val_loss} in epoch {}",
                self.epoch
            )));
        }

        let h_val = gather_complex(&data.h_est, val_idx);
        let inferred = infer(&self.model, &h_val)?;
        let mut evals = Vec::with_capacity(val_idx.len());
        for (inf, &s) in inferred.iter().zip(val_idx) {
            evals.push(evaluate(
                &inf.solution,
                &data.true_matrix(s),
                &data.est_matrix(s),
                &obj.template,
                &obj.energy,
                obj.sigma2,
            )?);
        }
        let exact = summarize(&evals);
        Ok(MetricsRow {
            epoch: self.epoch,
            train_loss,
            val_loss,
            val_sum_se: se_sum / n,
            val_power_w: p_sum / n,
            val_ee: ee_sum / n,
            active_rf_expected: rf_sum / n,
            lr: self.scheduler.lr,
            exact_sum_se: exact.se_true,
            exact_power_w: exact.power_w,
            exact_ee: exact.ee,
            exact_active_rf: exact.active_rf,
        })
    }
}

/// Full run: start, train for `config.epochs`, return the state.
pub fn train(
    config: TrainConfig,
    objective: Objective,
    data: &ChannelBatch,
    on_epoch: impl FnMut(&MetricsRow),
) -> Result<TrainState> {
    let epochs = config.epochs;
    let mut state = TrainState::start(config, objective, data)?;
    state.run_epochs(data, epochs, on_epoch)?;
    Ok(state)
}
