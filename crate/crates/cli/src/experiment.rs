//! Data preparation, method evaluation and sweeps shared by the commands.

use hbf_core::baselines::{fdp_baseline, pe_altmin, AltMinConfig};
use hbf_core::channel::{self, corrupt, generate, ChannelBatch};
use hbf_core::evaluate::{evaluate, summarize, SampleEval};
use hbf_core::hardware::TemplateKind;
use hbf_core::learner::{infer, train, Model, TrainState};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, Result};

/// Channels for `cfg`: loaded from the configured file or generated, then
/// corrupted to `cfg.channel.beta` if they are still perfect.
pub fn channels(cfg: &ExperimentConfig) -> Result<ChannelBatch> {
    let batch = match &cfg.channel.file {
        Some(f) => channel::load(f)?,
        None => generate(&cfg.geometry, cfg.channel.samples, cfg.system.n_users, cfg.seed)?,
    };
    if batch.n_antennas != cfg.geometry.n_antennas() || batch.n_users != cfg.system.n_users {
        return Err(CliError::Config(format!(
            "channels have {} users x {} antennas, config expects {} x {}",
            batch.n_users,
            batch.n_antennas,
            cfg.system.n_users,
            cfg.geometry.n_antennas()
        )));
    }
    let beta = cfg.channel.beta;
    if batch.beta == beta {
        return Ok(batch);
    }
    if batch.beta != 0.0 {
        return Err(CliError::Config(format!(
            "channel file already carries beta {}, config asks for {beta}",
            batch.beta
        )));
    }
    Ok(corrupt(&batch, beta, cfg.channel.error_variance, cfg.seed.wrapping_add(1))?)
}

/// Held-out tail of `batch` under the configured train fraction.
pub fn validation_split(cfg: &ExperimentConfig, batch: &ChannelBatch) -> Result<ChannelBatch> {
    let n_train = (batch.n_samples as f64 * cfg.train.train_fraction).floor() as usize;
    if n_train >= batch.n_samples {
        return Err(CliError::Config("validation split is empty".into()));
    }
    Ok(batch.slice(n_train..batch.n_samples)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleResult {
    pub eval: SampleEval,
    pub degenerate: bool,
}

/// Exact evaluation of `method` on every sample of `data`. Baselines solve
/// on the estimated channel; everything is scored on the true one.
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    model: Option<&Model>,
    data: &ChannelBatch,
) -> Result<Vec<SampleResult>> {
    let sigma2 = cfg.noise_w();
    let p_tx = cfg.energy.p_tx_w;
    let plain = |eval| SampleResult { eval, degenerate: false };
    match method {
        Method::FdpBaseline => {
            let t = cfg.template(TemplateKind::Fdp)?;
            (0..data.n_samples)
                .map(|s| {
                    let est = data.est_matrix(s);
                    let sol = fdp_baseline(&est, sigma2, p_tx)?;
                    Ok(plain(evaluate(&sol, &data.true_matrix(s), &est, &t, &cfg.energy, sigma2)?))
                })
                .collect()
        }
        Method::PeAltmin => {
            let kind = cfg.system.template;
            if !matches!(kind, TemplateKind::Fc | TemplateKind::Fsa) {
                return Err(CliError::Config(format!("pe_altmin needs an fc or fsa template, not {kind}")));
            }
            let t = cfg.template(kind)?;
            let alt = AltMinConfig {
                q_bits: Some(cfg.system.q_bits),
                ..Default::default()
            };
            (0..data.n_samples)
                .map(|s| {
                    let est = data.est_matrix(s);
                    let out = pe_altmin(&est, &t, &alt, sigma2, p_tx)?;
                    Ok(plain(evaluate(&out.solution, &data.true_matrix(s), &est, &t, &cfg.energy, sigma2)?))
                })
                .collect()
        }
        Method::Learned => {
            let model = model.ok_or_else(|| CliError::Config("the learned method needs a model".into()))?;
            let obj = &model.objective;
            infer(model, &data.h_est)?
                .iter()
                .enumerate()
                .map(|(s, inf)| {
                    let eval = evaluate(
                        &inf.solution,
                        &data.true_matrix(s),
                        &data.est_matrix(s),
                        &obj.template,
                        &obj.energy,
                        obj.sigma2,
                    )?;
                    Ok(SampleResult {
                        eval,
                        degenerate: inf.degenerate,
                    })
                })
                .collect()
        }
    }
}

/// Trains on `data` with the configured template and objective.
pub fn train_model(cfg: &ExperimentConfig, data: &ChannelBatch, mut log: impl FnMut(&str)) -> Result<TrainState> {
    let obj = cfg.objective(cfg.system.template)?;
    let epochs = cfg.train.epochs;
    Ok(train(cfg.train.clone(), obj, data, |r| {
        log(&format!(
            "epoch {}/{epochs} train {:.4} val {:.4} se {:.3} power {:.3} W exact se {:.3} power {:.3} W",
            r.epoch + 1,
            r.train_loss,
            r.val_loss,
            r.val_sum_se,
            r.val_power_w,
            r.exact_sum_se,
            r.exact_power_w
        ))
    })?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub n_users: usize,
    pub p_tx_w: f64,
    pub beta: f64,
    /// Learned rows only.
    pub r_d: Option<f64>,
    pub gamma: Option<f64>,
    pub best_epoch: Option<usize>,
    pub active_rf_expected: Option<f64>,
    pub samples: usize,
    pub se_true: f64,
    pub se_est: f64,
    pub power_w: f64,
    pub active_rf: f64,
    pub active_ant: f64,
    pub ee: f64,
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "method",
    "n_users",
    "p_tx_w",
    "beta",
    "r_d_bps_hz",
    "gamma",
    "best_epoch",
    "active_rf_expected",
    "samples",
    "sum_se_true_bps_hz",
    "sum_se_est_bps_hz",
    "total_power_w",
    "active_rf",
    "active_antennas",
    "ee_bps_hz_per_w",
];

impl SweepRow {
    pub fn cells(&self) -> Vec<String> {
        use crate::csv_out::{num, opt};
        vec![
            self.method.to_string(),
            self.n_users.to_string(),
            num(self.p_tx_w),
            num(self.beta),
            opt(self.r_d),
            opt(self.gamma),
            self.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            opt(self.active_rf_expected),
            self.samples.to_string(),
            num(self.se_true),
            num(self.se_est),
            num(self.power_w),
            num(self.active_rf),
            num(self.active_ant),
            num(self.ee),
        ]
    }

    fn sort_key(&self, other: &Self) -> std::cmp::Ordering {
        self.method
            .cmp(&other.method)
            .then(self.n_users.cmp(&other.n_users))
            .then(self.p_tx_w.total_cmp(&other.p_tx_w))
            .then(self.beta.total_cmp(&other.beta))
            .then(self.r_d.unwrap_or(0.0).total_cmp(&other.r_d.unwrap_or(0.0)))
    }
}

/// Every point of the sweep grid. Baselines do not depend on the SE target
/// and get one row per (users, power, beta); the learned method gets one
/// per target as well. Rows come back sorted by axis values.
pub fn sweep(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<Vec<SweepRow>> {
    let s = &cfg.sweep;
    let mut rows = Vec::new();
    for &n_users in &s.n_users {
        for &p_tx in &s.p_tx {
            for &beta in &s.beta {
                let mut point = cfg.clone();
                point.system.n_users = n_users;
                point.energy.p_tx_w = p_tx;
                point.channel.beta = beta;
                point.validate()?;
                let data = channels(&point)?;
                let val = validation_split(&point, &data)?;
                for &method in &s.methods {
                    let summary_row = |evals: &[SampleResult], r_d, gamma, best_epoch, expected| {
                        let e: Vec<SampleEval> = evals.iter().map(|r| r.eval).collect();
                        let m = summarize(&e);
                        SweepRow {
                            method,
                            n_users,
                            p_tx_w: p_tx,
                            beta,
                            r_d,
                            gamma,
                            best_epoch,
                            active_rf_expected: expected,
                            samples: m.n,
                            se_true: m.se_true,
                            se_est: m.se_est,
                            power_w: m.power_w,
                            active_rf: m.active_rf,
                            active_ant: m.active_ant,
                            ee: m.ee,
                        }
                    };
                    if method != Method::Learned {
                        log(&format!("{method}: users {n_users} p_tx {p_tx} W beta {beta}"));
                        let evals = run_method(&point, method, None, &val)?;
                        rows.push(summary_row(&evals, None, None, None, None));
                        continue;
                    }
                    for &r_d in &s.r_d {
                        let mut p = point.clone();
                        p.objective.r_d = r_d;
                        log(&format!("learned: users {n_users} p_tx {p_tx} W beta {beta} r_d {r_d} gamma {}", p.gamma()));
                        let state = train_model(&p, &data, &mut log)?;
                        let best = state
                            .best_epoch
                            .ok_or_else(|| CliError::Config("training ran no epochs".into()))?;
                        let expected = state.history[best].active_rf_expected;
                        let evals = run_method(&p, method, Some(&state.best_model()), &val)?;
                        rows.push(summary_row(&evals, Some(r_d), Some(p.gamma()), Some(best), Some(expected)));
                    }
                }
            }
        }
    }
    rows.sort_by(SweepRow::sort_key);
    Ok(rows)
}
