//! Unsupervised training loss: weighted relaxed power plus the squared gap
//! between the per-user spectral efficiency and its target.

use hbf_autodiff::{ComplexTensor, ComplexVar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::energy::{expected_active_rf, total_power_relaxed, EnergyParams, RfCountRule};
use crate::error::{CoreError, Result};
use crate::hardware::{quantize_angle, HardwareTemplate, TemplateKind};
use crate::learner::gumbel::{gumbel_sigmoid, GumbelNoise};
use crate::learner::network::Heads;

/// Smallest transmit power used as a divisor during normalization.
const POWER_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub template: HardwareTemplate,
    pub energy: EnergyParams,
    /// Noise power, watts.
    pub sigma2: f64,
    pub gamma: f64,
    pub r_d: f64,
    pub tau: f64,
    pub rf_rule: RfCountRule,
    /// Pass phases through the straight-through quantizer.
    pub quantize: bool,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !(self.r_d > 0.0) || !(self.tau > 0.0) || !(self.sigma2 > 0.0) {
            return Err(CoreError::Domain(format!(
                "need gamma >= 0, r_d > 0, tau > 0 and sigma2 > 0 (got {}, {}, {}, {})",
                self.gamma, self.r_d, self.tau, self.sigma2
            )));
        }
        self.energy.validate()
    }
}

/// Per-sample pieces of the loss, all `[B]` except `omega`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'t> {
    pub loss: Var<'t>,
    pub sum_se: Var<'t>,
    pub power: Var<'t>,
    /// Soft connections: `[B, N_T, N_RF]`, or `[B, N_T]` for FDP.
    pub omega: Var<'t>,
    /// Connection-average RF-chain count (`Σω̄` for FDP).
    pub active_rf: Var<'t>,
}

fn fsa_pattern(template: &HardwareTemplate, b: usize) -> Tensor {
    let (t, r) = (template.n_t, template.n_rf);
    let mut data = vec![0.0; b * t * r];
    for s in 0..b {
        for n in 0..t {
            data[(s * t + n) * r + template.fsa_chain(n)] = 1.0;
        }
    }
    Tensor::new(vec![b, t, r], data).unwrap()
}

/// Soft connection matrix from the logit head.
pub fn soft_connections<'t>(
    obj: &Objective,
    heads: &Heads<'t>,
    noise: Option<GumbelNoise<'_>>,
) -> Result<Var<'t>> {
    let t = obj.template;
    let b = heads.logits.shape()[0];
    let tape = heads.logits.tape();
    match t.kind {
        TemplateKind::Fdp => gumbel_sigmoid(heads.logits, obj.tau, noise),
        TemplateKind::Fsa => Ok(tape.constant(fsa_pattern(&t, b))),
        TemplateKind::Fc => {
            gumbel_sigmoid(heads.logits.reshape(&[b, t.n_t, t.n_rf])?, obj.tau, noise)
        }
        TemplateKind::Dsa => {
            let g = gumbel_sigmoid(heads.logits.reshape(&[b, t.n_t, t.n_rf])?, obj.tau, noise)?;
            Ok(g.div(g.sum_axis(2)?)?)
        }
    }
}

fn complex_heads<'t>(heads: &Heads<'t>, rows: usize, cols: usize) -> Result<ComplexVar<'t>> {
    let b = heads.digital_re.shape()[0];
    Ok(ComplexVar::new(
        heads.digital_re.reshape(&[b, rows, cols])?,
        heads.digital_im.reshape(&[b, rows, cols])?,
    )?)
}

/// Sum SE per sample for gains `G = H·F`, `[B, U, U]` → `[B]`.
fn batch_sum_se<'t>(g: ComplexVar<'t>, sigma2: f64) -> Result<Var<'t>> {
    let shape = g.shape();
    let (b, u) = (shape[0], shape[1]);
    let tape = g.re.tape();
    let mag = g.abs2()?;
    let signal = mag.mul(tape.constant(Tensor::identity(u)))?.sum_axis(2)?;
    let interference = mag.sum_axis(2)?.sub(signal)?;
    let sinr = signal.div(interference.add_scalar(sigma2))?;
    Ok(sinr.add_scalar(1.0).log2().sum_axis(1)?.reshape(&[b])?)
}

/// Loss on a batch. `h_est` is `[B, N_U, N_T]`; `noise` switches the
/// Gumbel gate between stochastic and deterministic.
pub fn loss<'t>(
    obj: &Objective,
    heads: &Heads<'t>,
    h_est: &ComplexTensor,
    noise: Option<GumbelNoise<'_>>,
) -> Result<LossTerms<'t>> {
    let t = obj.template;
    let shape = h_est.shape().to_vec();
    let b = heads.logits.shape()[0];
    if shape.len() != 3 || shape[0] != b || shape[2] != t.n_t {
        return Err(CoreError::Dimension(format!(
            "channel batch {shape:?} for {b} samples of {} antennas",
            t.n_t
        )));
    }
    let n_u = shape[1];
    let tape = heads.logits.tape();
    let h = ComplexVar::constant(tape, h_est);
    let omega = soft_connections(obj, heads, noise)?;
    let p_tx = obj.energy.p_tx_w;

    let (precoder, p_ant, active_rf) = if t.is_hybrid() {
        let w = complex_heads(heads, t.n_rf, n_u)?;
        let raw = heads
            .angles
            .ok_or_else(|| CoreError::Contract("hybrid network without angle head".into()))?
            .reshape(&[b, t.n_t, t.n_rf])?;
        let q = t.q_bits;
        let angles = if obj.quantize {
            raw.straight_through(move |a| quantize_angle(a, q))
        } else {
            raw
        };
        let analog = ComplexVar::from_phase(angles).mul_real(omega)?;
        let aw = analog.matmul(w)?;
        let budget = omega
            .sum_axis(2)?
            .sum_axis(1)?
            .scale(p_tx / t.max_connections() as f64);
        let p_ant = aw.abs2()?.sum_axis(2)?.reshape(&[b, t.n_t])?;
        let power = p_ant.sum_axis(1)?.clamp_min(POWER_FLOOR).reshape(&[b, 1, 1])?;
        let ratio = budget.div(power)?;
        let aw = aw.mul_real(ratio.sqrt())?;
        let p_ant = p_ant.mul(ratio.reshape(&[b, 1])?)?;
        (aw, p_ant, expected_active_rf(omega)?)
    } else {
        let u = complex_heads(heads, t.n_t, n_u)?;
        let per_ant = u.abs2()?.sum_axis(2)?.reshape(&[b, t.n_t])?;
        let weighted = per_ant.mul(omega)?;
        let budget = omega.sum_axis(1)?.scale(p_tx / t.n_t as f64);
        let ratio = budget.div(weighted.sum_axis(1)?.clamp_min(POWER_FLOOR))?;
        let effective = u
            .mul_real(omega.reshape(&[b, t.n_t, 1])?)?
            .mul_real(ratio.sqrt().reshape(&[b, 1, 1])?)?;
        let active = omega.sum_axis(1)?.reshape(&[b])?;
        (effective, weighted.mul(ratio)?, active)
    };

    let sum_se = batch_sum_se(h.matmul(precoder)?, obj.sigma2)?;
    let power = total_power_relaxed(&t, omega, p_ant, &obj.energy, obj.rf_rule)?;
    let gap = sum_se.scale(1.0 / n_u as f64).add_scalar(-obj.r_d).square();
    let loss = power.mean().scale(obj.gamma).add(gap.mean())?;
    Ok(LossTerms {
        loss,
        sum_se,
        power,
        omega,
        active_rf,
    })
}
