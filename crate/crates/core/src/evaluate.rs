//! Exact evaluation of a binary precoder solution: spectral efficiency on
//! the true and estimated channels plus the power breakdown.

use serde::Serialize;

use crate::energy::{total_power_exact, EnergyParams, PowerBreakdown};
use crate::error::Result;
use crate::hardware::{CMat, HardwareTemplate, PrecoderSolution};
use crate::metrics::{sinr_fdp, sum_se};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleEval {
    pub se_true: f64,
    pub se_est: f64,
    pub power: PowerBreakdown,
    /// `se_true / total power`, or 0 when nothing is switched on.
    pub ee: f64,
}

pub fn evaluate(
    solution: &PrecoderSolution,
    h_true: &CMat,
    h_est: &CMat,
    template: &HardwareTemplate,
    energy: &EnergyParams,
    sigma2: f64,
) -> Result<SampleEval> {
    let f = solution.effective_precoder()?;
    let se_true = sum_se(&sinr_fdp(h_true, &f, sigma2)?);
    let se_est = sum_se(&sinr_fdp(h_est, &f, sigma2)?);
    let p_ant = solution.per_antenna_power()?;
    let power = total_power_exact(template, solution.connection(), &p_ant, energy)?;
    let ee = if power.total_w > 0.0 { se_true / power.total_w } else { 0.0 };
    Ok(SampleEval {
        se_true,
        se_est,
        power,
        ee,
    })
}

/// Averages over a set of evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n: usize,
    pub se_true: f64,
    pub se_est: f64,
    pub power_w: f64,
    pub active_rf: f64,
    pub active_ant: f64,
    pub ee: f64,
}

pub fn summarize(evals: &[SampleEval]) -> EvalSummary {
    let n = evals.len().max(1) as f64;
    let mean = |f: &dyn Fn(&SampleEval) -> f64| evals.iter().map(f).sum::<f64>() / n;
    EvalSummary {
        n: evals.len(),
        se_true: mean(&|e| e.se_true),
        se_est: mean(&|e| e.se_est),
        power_w: mean(&|e| e.power.total_w),
        active_rf: mean(&|e| e.power.n_active_rf),
        active_ant: mean(&|e| e.power.n_active_ant as f64),
        ee: mean(&|e| e.ee),
    }
}
