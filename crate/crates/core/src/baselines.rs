//! Non-learning reference precoders: a regularized zero-forcing start
//! refined by WMMSE sweeps (all antennas on), and phase-extraction
//! alternating minimization for hybrid templates.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hardware::{
    quantize_angle, ConnectionMatrix, CMat, HardwareTemplate, PrecoderSolution, TemplateKind, C64,
};
use crate::metrics::{sinr_fdp, sum_se};

pub const WMMSE_SWEEPS: usize = 20;
const PINV_CUTOFF: f64 = 1e-12;

fn frobenius2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn rescale(m: &CMat, power: f64) -> Result<CMat> {
    let current = frobenius2(m);
    if !(current > 0.0 && current.is_finite()) {
        return Err(CoreError::Degenerate(format!("precoder power {current} cannot be rescaled")));
    }
    Ok(m * C64::new((power / current).sqrt(), 0.0))
}

fn check_inputs(h: &CMat, sigma2: f64, p_tx: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !(p_tx > 0.0) {
        return Err(CoreError::Domain(format!(
            "noise power and transmit power must be positive, got {sigma2} and {p_tx}"
        )));
    }
    if h.nrows() == 0 || h.nrows() > h.ncols() {
        return Err(CoreError::Domain(format!(
            "need 1 <= users <= antennas, channel is {:?}",
            h.shape()
        )));
    }
    Ok(())
}

/// `Hᴴ(HHᴴ + reg·I)⁻¹` scaled to `p_tx`.
pub fn regularized_zf(h: &CMat, reg: f64, p_tx: f64) -> Result<CMat> {
    let hh = h.adjoint();
    let gram = h * &hh + CMat::identity(h.nrows(), h.nrows()) * C64::new(reg, 0.0);
    let inv = gram
        .try_inverse()
        .ok_or_else(|| CoreError::Numerical("channel Gram matrix is singular".into()))?;
    rescale(&(hh * inv), p_tx)
}

/// One closed-form WMMSE transmit update, rescaled to `p_tx`.
fn wmmse_sweep(h: &CMat, v: &CMat, sigma2: f64, p_tx: f64) -> Result<CMat> {
    let k = h.nrows();
    let g = h * v;
    let mut coef = vec![C64::new(0.0, 0.0); k];
    let mut d = vec![0.0; k];
    for u in 0..k {
        let total: f64 = g.row(u).iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2;
        let rx = g[(u, u)] / total;
        let mse = 1.0 - g[(u, u)].norm_sqr() / total;
        let weight = 1.0 / mse.max(1e-300);
        coef[u] = rx * weight;
        d[u] = weight * rx.norm_sqr();
    }
    let mu = sigma2 / p_tx * d.iter().sum::<f64>();
    // (HᴴDH + μI)⁻¹Hᴴ = Hᴴ(DHHᴴ + μI)⁻¹
    let mut inner = h * h.adjoint();
    for u in 0..k {
        inner.row_mut(u).scale_mut(d[u]);
    }
    inner += CMat::identity(k, k) * C64::new(mu, 0.0);
    let inv = inner
        .try_inverse()
        .ok_or_else(|| CoreError::Numerical("WMMSE inner matrix is singular".into()))?;
    let mut out = h.adjoint() * inv;
    for (u, c) in coef.iter().enumerate() {
        let col = out.column(u) * *c;
        out.set_column(u, &col);
    }
    rescale(&out, p_tx)
}

/// All-antenna digital precoder: regularized ZF followed by up to
/// [`WMMSE_SWEEPS`] WMMSE sweeps, each kept only if it raises sum SE.
pub fn fdp_baseline(h: &CMat, sigma2: f64, p_tx: f64) -> Result<PrecoderSolution> {
    check_inputs(h, sigma2, p_tx)?;
    let reg = h.nrows() as f64 * sigma2 / p_tx;
    let mut best = regularized_zf(h, reg, p_tx)?;
    let mut best_se = sum_se(&sinr_fdp(h, &best, sigma2)?);
    for _ in 0..WMMSE_SWEEPS {
        let cand = wmmse_sweep(h, &best, sigma2, p_tx)?;
        let se = sum_se(&sinr_fdp(h, &cand, sigma2)?);
        if se > best_se {
            best = cand;
            best_se = se;
        } else {
            break;
        }
    }
    Ok(PrecoderSolution::Digital {
        u: best,
        mask: ConnectionMatrix::ones(h.ncols(), 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AltMinConfig {
    pub max_iters: usize,
    /// Minimum drop of `‖U_opt − AW‖_F`, relative to `‖U_opt‖_F`, for a
    /// step to be accepted.
    pub tol: f64,
    /// Phase resolution; `None` keeps continuous phases.
    pub q_bits: Option<u32>,
}

impl Default for AltMinConfig {
    fn default() -> Self {
        AltMinConfig {
            max_iters: 15,
            tol: 1e-4,
            q_bits: Some(crate::hardware::DEFAULT_Q_BITS),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AltMinOutcome {
    pub solution: PrecoderSolution,
    /// `‖U_opt − AW‖_F` after the initial solve and each accepted step.
    pub residuals: Vec<f64>,
}

fn pinv(a: &CMat) -> Result<CMat> {
    if a.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(CoreError::Degenerate("analog precoder is all zero".into()));
    }
    a.clone()
        .pseudo_inverse(PINV_CUTOFF)
        .map_err(|e| CoreError::Numerical(format!("pseudoinverse failed: {e}")))
}

fn phase_matrix(angles: &[f64], rows: usize, cols: usize, q_bits: Option<u32>) -> CMat {
    CMat::from_fn(rows, cols, |n, m| {
        let a = angles[n * cols + m];
        C64::from_polar(1.0, q_bits.map_or(a, |q| quantize_angle(a, q)))
    })
}

/// Phase-extraction alternating minimization towards `fdp_baseline`'s
/// precoder. Supports FC and FSA templates.
pub fn pe_altmin(
    h: &CMat,
    template: &HardwareTemplate,
    config: &AltMinConfig,
    sigma2: f64,
    p_tx: f64,
) -> Result<AltMinOutcome> {
    if !matches!(template.kind, TemplateKind::Fc | TemplateKind::Fsa) {
        return Err(CoreError::Domain(format!(
            "phase-extraction solver supports fc and fsa templates, not {}",
            template.kind
        )));
    }
    if config.max_iters == 0 || !(config.tol > 0.0) {
        return Err(CoreError::Domain("need max_iters >= 1 and tol > 0".into()));
    }
    if h.ncols() != template.n_t {
        return Err(CoreError::Dimension(format!(
            "channel has {} antennas, template {}",
            h.ncols(),
            template.n_t
        )));
    }
    let u_opt = match fdp_baseline(h, sigma2, p_tx)? {
        PrecoderSolution::Digital { u, .. } => u,
        PrecoderSolution::Hybrid { .. } => unreachable!(),
    };
    let (n_t, n_rf, n_u) = (template.n_t, template.n_rf, h.nrows());
    let omega = template.full_connection();
    let u_norm = frobenius2(&u_opt).sqrt();

    let mut angles: Vec<f64> = (0..n_t * n_rf)
        .map(|i| {
            let (n, m) = (i / n_rf, i % n_rf);
            u_opt[(n, m % n_u)].arg() + TAU * (m / n_u) as f64 * n as f64 / n_t as f64
        })
        .collect();

    let analog = |angles: &[f64]| {
        let p = phase_matrix(angles, n_t, n_rf, config.q_bits);
        let a = CMat::from_fn(n_t, n_rf, |n, m| {
            if omega.get(n, m) {
                p[(n, m)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        (p, a)
    };
    let solve = |a: &CMat| -> Result<(CMat, f64)> {
        let w = pinv(a)? * &u_opt;
        let r = frobenius2(&(&u_opt - a * &w)).sqrt();
        Ok((w, r))
    };

    let (mut p, mut a) = analog(&angles);
    let (mut w, mut r) = solve(&a)?;
    let mut residuals = vec![r];
    for _ in 0..config.max_iters {
        let target = &u_opt * w.adjoint();
        let cand: Vec<f64> = (0..n_t * n_rf)
            .map(|i| {
                let (n, m) = (i / n_rf, i % n_rf);
                if omega.get(n, m) {
                    target[(n, m)].arg()
                } else {
                    angles[i]
                }
            })
            .collect();
        let (cp, ca) = analog(&cand);
        let (cw, cr) = solve(&ca)?;
        if r - cr > config.tol * u_norm {
            angles = cand;
            (p, a, w, r) = (cp, ca, cw, cr);
            residuals.push(r);
        } else {
            break;
        }
    }
    let out_power = frobenius2(&(&a * &w));
    if !(out_power > 0.0) {
        return Err(CoreError::Degenerate("hybrid precoder radiates no power".into()));
    }
    let w = w * C64::new((p_tx / out_power).sqrt(), 0.0);
    Ok(AltMinOutcome {
        solution: PrecoderSolution::Hybrid { phases: p, omega, w },
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_channel() {
        let h = CMat::identity(2, 2);
        let sol = fdp_baseline(&h, 1.0, 2.0).unwrap();
        let u = sol.effective_precoder().unwrap();
        for i in 0..2 {
            assert!((u[(i, i)].norm() - 1.0).abs() < 1e-9);
            assert!(u[(i, 1 - i)].norm() < 1e-9);
        }
        assert!((sum_se(&sinr_fdp(&h, &u, 1.0).unwrap()) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_user_is_matched_filter() {
        let h = CMat::from_row_slice(1, 3, &[C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(0.3, -1.0)]);
        let sol = fdp_baseline(&h, 0.5, 4.0).unwrap();
        let u = sol.effective_precoder().unwrap();
        let hn2 = frobenius2(&h);
        // u = √p·h/‖h‖ where h is the column conj(row)
        let mrt = h.adjoint() * C64::new((4.0 / hn2).sqrt(), 0.0);
        let phase = u[(0, 0)] / mrt[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-9);
        assert!((u - mrt * phase).iter().all(|z| z.norm() < 1e-9));
        let s = sinr_fdp(&h, &sol.effective_precoder().unwrap(), 0.5).unwrap();
        assert!((s[0] - 4.0 * hn2 / 0.5).abs() < 1e-9 * s[0]);
    }

    #[test]
    fn rejects_unsupported_template() {
        let h = CMat::identity(2, 4);
        let t = HardwareTemplate::new(TemplateKind::Dsa, 4, 2).unwrap();
        assert!(pe_altmin(&h, &t, &AltMinConfig::default(), 1.0, 1.0).is_err());
    }
}
