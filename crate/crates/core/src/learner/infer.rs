//! Online path: deterministic gates rounded to a binary connection matrix,
//! hard-quantized phases and power normalized to the rounded budget.

use hbf_autodiff::{ComplexTensor, Tape};
use nalgebra::DMatrix;

use crate::error::Result;
use crate::hardware::{
    effective_budget, normalize_power, quantize_phases, CMat, ConnectionMatrix, PrecoderSolution,
    TemplateKind, C64,
};
use crate::learner::features::{features, gather_complex};
use crate::learner::network::{forward, NetworkSpec, ParamSet};
use crate::learner::features::Standardizer;
use crate::learner::objective::Objective;

const CHUNK: usize = 1000;

/// A trained network with everything needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: ParamSet,
    pub standardizer: Standardizer,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    pub solution: PrecoderSolution,
    /// Rounding switched everything off (or the precoder radiates nothing);
    /// the solution then carries a zero digital precoder.
    pub degenerate: bool,
}

/// Element-wise rounding of a gate value; exactly 0.5 rounds up.
pub fn round_gate(g: f64) -> bool {
    g >= 0.5
}

fn deterministic_gate(logit: f64, tau: f64) -> f64 {
    1.0 / (1.0 + (-logit / tau).exp())
}

fn connection_from_logits(obj: &Objective, logits: &[f64]) -> ConnectionMatrix {
    let t = obj.template;
    match t.kind {
        TemplateKind::Fdp => ConnectionMatrix::from_mask(
            logits.iter().map(|&l| round_gate(deterministic_gate(l, obj.tau))).collect(),
        ),
        TemplateKind::Fc => ConnectionMatrix::new(
            t.n_t,
            t.n_rf,
            logits.iter().map(|&l| round_gate(deterministic_gate(l, obj.tau))).collect(),
        )
        .unwrap(),
        TemplateKind::Fsa => t.full_connection(),
        TemplateKind::Dsa => {
            // each antenna keeps its strongest chain (lowest index on ties)
            let mut omega = ConnectionMatrix::zeros(t.n_t, t.n_rf);
            for (n, row) in logits.chunks(t.n_rf).enumerate() {
                let mut best = 0;
                for (m, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = m;
                    }
                }
                omega.set(n, best, true);
            }
            omega
        }
    }
}

fn zero_digital(solution: &PrecoderSolution) -> PrecoderSolution {
    let mut out = solution.clone();
    match &mut out {
        PrecoderSolution::Digital { u, .. } => u.fill(C64::new(0.0, 0.0)),
        PrecoderSolution::Hybrid { w, .. } => w.fill(C64::new(0.0, 0.0)),
    }
    out
}

/// Runs the model on `[S, U, T]` estimated channels.
pub fn infer(model: &Model, h_est: &ComplexTensor) -> Result<Vec<Inferred>> {
    let obj = &model.objective;
    let t = obj.template;
    let n_u = h_est.shape()[1];
    let s = h_est.shape()[0];
    let mut out = Vec::with_capacity(s);
    let idx: Vec<usize> = (0..s).collect();
    for chunk in idx.chunks(CHUNK) {
        let x = model.standardizer.apply(&features(&gather_complex(h_est, chunk))?)?;
        let tape = Tape::new();
        let vars = model.params.on_tape(&tape, false);
        let heads = forward(&model.spec, &vars, tape.constant(x))?;
        let (re, im) = (heads.digital_re.value(), heads.digital_im.value());
        let logits = heads.logits.value();
        let angles = heads.angles.map(|a| a.value());
        let (dw, lw) = (re.shape()[1], logits.shape()[1]);
        for b in 0..chunk.len() {
            let omega = connection_from_logits(obj, &logits.data()[b * lw..(b + 1) * lw]);
            let (rows, cols) = if t.is_hybrid() { (t.n_rf, n_u) } else { (t.n_t, n_u) };
            let digital = CMat::from_fn(rows, cols, |i, j| {
                let k = b * dw + i * cols + j;
                C64::new(re.data()[k], im.data()[k])
            });
            let raw = match &angles {
                Some(a) => {
                    let aw = a.shape()[1];
                    let slice = &a.data()[b * aw..(b + 1) * aw];
                    PrecoderSolution::Hybrid {
                        phases: quantize_phases(
                            &DMatrix::from_row_slice(t.n_t, t.n_rf, slice),
                            t.q_bits,
                        ),
                        omega: omega.clone(),
                        w: digital,
                    }
                }
                None => PrecoderSolution::Digital {
                    u: digital,
                    mask: omega.clone(),
                },
            };
            let budget = effective_budget(&omega, &t, obj.energy.p_tx_w);
            let inferred = if budget > 0.0 {
                match normalize_power(&raw, budget) {
                    Ok(solution) => Inferred {
                        solution,
                        degenerate: false,
                    },
                    Err(_) => Inferred {
                        solution: zero_digital(&raw),
                        degenerate: true,
                    },
                }
            } else {
                Inferred {
                    solution: zero_digital(&raw),
                    degenerate: true,
                }
            };
            out.push(inferred);
        }
    }
    Ok(out)
}
