//! Transmitter power consumption: per-component models, the exact total
//! for a binary connection matrix, its differentiable relaxation for
//! training, hardware inventories and real-multiplication counts.

use std::fmt;
use std::str::FromStr;

use hbf_autodiff::Var;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hardware::{ConnectionMatrix, HardwareTemplate, TemplateKind};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w * 1e3)
}

/// Component constants. Frequencies in Hz, powers in watts, losses in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// LPF figure of merit, mW per GHz per pole.
    pub fom_lpf_mw_per_ghz: f64,
    /// DAC figure of merit, fJ per conversion step.
    pub fom_dac_fj: f64,
    pub f_s_hz: f64,
    pub f_c_hz: f64,
    pub lpf_order: u32,
    pub p_tx_w: f64,
    /// Power-added efficiency of the PAs.
    pub pae: f64,
    pub p_bb_out_w: f64,
    pub p_lo_w: f64,
    pub il_mixer_db: f64,
    pub il_combiner_db: f64,
    pub il_ps_db: f64,
    pub il_switch_db: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            fom_lpf_mw_per_ghz: 1.4,
            fom_dac_fj: 54.5,
            f_s_hz: 0.5e9,
            f_c_hz: 0.5e9,
            lpf_order: 1,
            p_tx_w: 10.0,
            pae: 0.36,
            p_bb_out_w: dbm_to_watts(-5.6),
            p_lo_w: 10e-3,
            il_mixer_db: 5.5,
            il_combiner_db: 1.8,
            il_ps_db: 3.7,
            il_switch_db: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fom_lpf_mw_per_ghz", self.fom_lpf_mw_per_ghz),
            ("fom_dac_fj", self.fom_dac_fj),
            ("f_s_hz", self.f_s_hz),
            ("f_c_hz", self.f_c_hz),
            ("p_tx_w", self.p_tx_w),
            ("p_bb_out_w", self.p_bb_out_w),
            ("p_lo_w", self.p_lo_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        let losses = [
            ("il_mixer_db", self.il_mixer_db),
            ("il_combiner_db", self.il_combiner_db),
            ("il_ps_db", self.il_ps_db),
            ("il_switch_db", self.il_switch_db),
        ];
        for (name, v) in losses {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::Domain(format!("{name} must be >= 0 dB, got {v}")));
            }
        }
        if !(self.pae > 0.0 && self.pae <= 1.0) {
            return Err(CoreError::Domain(format!("pae must lie in (0, 1], got {}", self.pae)));
        }
        if self.lpf_order == 0 {
            return Err(CoreError::Domain("lpf_order must be >= 1".into()));
        }
        Ok(())
    }

    /// Product of the linear insertion losses between an RF chain and a PA.
    /// Combiners vanish when `c = 1`; switches vanish when `ψ = 1` or `ψ = c`.
    pub fn insertion_loss(&self, template: &HardwareTemplate) -> f64 {
        let mixer = db_to_linear(self.il_mixer_db);
        if !template.is_hybrid() {
            return mixer;
        }
        let combiner = if template.c == 1 { 1.0 } else { db_to_linear(self.il_combiner_db) };
        let switch = if template.psi == 1 || template.psi == template.c {
            1.0
        } else {
            db_to_linear(self.il_switch_db)
        };
        mixer * db_to_linear(self.il_ps_db) * combiner * switch
    }

    /// `P_BB_out / ΠIL`.
    pub fn pa_input_prefactor(&self, template: &HardwareTemplate) -> f64 {
        self.p_bb_out_w / self.insertion_loss(template)
    }
}

/// `FoM_D · f_s · 2^b`.
pub fn dac_power(params: &EnergyParams, b_dac: u32) -> f64 {
    params.fom_dac_fj * 1e-15 * params.f_s_hz * 2f64.powi(b_dac as i32)
}

/// `FoM_L · f_c · m′`.
pub fn lpf_power(params: &EnergyParams) -> f64 {
    params.fom_lpf_mw_per_ghz * 1e-3 / 1e9 * params.f_c_hz * params.lpf_order as f64
}

/// LPF + LO + DAC draw of one active RF chain.
pub fn rf_chain_power(params: &EnergyParams, b_dac: u32) -> f64 {
    lpf_power(params) + params.p_lo_w + dac_power(params, b_dac)
}

/// PA input power per antenna. Inactive antennas get 0.
pub fn pa_input_power(
    template: &HardwareTemplate,
    omega: &ConnectionMatrix,
    params: &EnergyParams,
) -> Result<Vec<f64>> {
    omega.validate(template)?;
    let pre = params.pa_input_prefactor(template);
    if !template.is_hybrid() {
        return Ok(omega.entries().iter().map(|&on| if on { pre } else { 0.0 }).collect());
    }
    let col = omega.column_sums();
    Ok((0..omega.rows())
        .map(|n| {
            let share: f64 = (0..omega.cols())
                .filter(|&m| omega.get(n, m))
                .map(|m| 1.0 / col[m] as f64)
                .sum();
            pre * share
        })
        .collect())
}

/// `(P_TX^n − P_in^n)/α` per antenna.
pub fn pa_dc_power(p_tx: &[f64], p_in: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if p_tx.len() != p_in.len() {
        return Err(CoreError::Dimension(format!(
            "{} transmit powers vs {} input powers",
            p_tx.len(),
            p_in.len()
        )));
    }
    p_tx.iter()
        .zip(p_in)
        .enumerate()
        .map(|(n, (&t, &i))| {
            if t < i {
                Err(CoreError::Infeasible { antenna: n, p_tx: t, p_in: i })
            } else {
                Ok((t - i) / alpha)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBreakdown {
    pub n_active_rf: f64,
    pub n_active_ant: usize,
    pub p_dac_w: f64,
    pub p_lpf_w: f64,
    pub p_lo_w: f64,
    pub p_pa_w: f64,
    pub total_w: f64,
}

impl PowerBreakdown {
    pub fn zero() -> Self {
        PowerBreakdown {
            n_active_rf: 0.0,
            n_active_ant: 0,
            p_dac_w: 0.0,
            p_lpf_w: 0.0,
            p_lo_w: 0.0,
            p_pa_w: 0.0,
            total_w: 0.0,
        }
    }

    pub fn report(&self) -> String {
        format!(
            "active rf chains: {}\nactive antennas: {}\ndac_w: {:.6e}\nlpf_w: {:.6e}\nlo_w: {:.6e}\npa_w: {:.6e}\ntotal_w: {:.6e}\n",
            self.n_active_rf,
            self.n_active_ant,
            self.p_dac_w,
            self.p_lpf_w,
            self.p_lo_w,
            self.p_pa_w,
            self.total_w
        )
    }
}

/// Total consumption of a binary configuration: active RF chains times
/// their LPF/LO/DAC draw plus the DC draw of every active PA.
pub fn total_power_exact(
    template: &HardwareTemplate,
    omega: &ConnectionMatrix,
    p_tx_per_antenna: &[f64],
    params: &EnergyParams,
) -> Result<PowerBreakdown> {
    let p_in = pa_input_power(template, omega, params)?;
    let active = omega.active_rows();
    if p_tx_per_antenna.len() != active.len() {
        return Err(CoreError::Dimension(format!(
            "{} transmit powers for {} antennas",
            p_tx_per_antenna.len(),
            active.len()
        )));
    }
    for (n, (&on, &p)) in active.iter().zip(p_tx_per_antenna).enumerate() {
        if !on && p > 0.0 {
            return Err(CoreError::Contract(format!(
                "antenna {n} is switched off but radiates {p:e} W"
            )));
        }
    }
    let dc = pa_dc_power(p_tx_per_antenna, &p_in, params.pae)?;
    let n_rf = if template.is_hybrid() {
        omega.active_columns()
    } else {
        omega.count_ones()
    } as f64;
    let p_dac = n_rf * dac_power(params, template.b_dac);
    let p_lpf = n_rf * lpf_power(params);
    let p_lo = n_rf * params.p_lo_w;
    let p_pa: f64 = dc.iter().sum();
    Ok(PowerBreakdown {
        n_active_rf: n_rf,
        n_active_ant: active.iter().filter(|&&a| a).count(),
        p_dac_w: p_dac,
        p_lpf_w: p_lpf,
        p_lo_w: p_lo,
        p_pa_w: p_pa,
        total_w: n_rf * rf_chain_power(params, template.b_dac) + p_pa,
    })
}

/// How the relaxed total counts active RF chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfCountRule {
    /// `1ᵀΩ̄ᵀ1 / N_T`: the average connection density per chain.
    ConnectionAverage,
    /// `Σ_m (1 − Π_n (1 − Ω̄_nm))`: probability that a chain has any
    /// connection. Equals the exact active-chain count on binary input.
    ColumnActivity,
}

fn as_batch<'t>(omega: Var<'t>, hybrid: bool) -> Result<Var<'t>> {
    let shape = omega.shape();
    match (hybrid, shape.len()) {
        (true, 3) | (false, 2) => Ok(omega),
        (true, 2) | (false, 1) => {
            let mut s = vec![1];
            s.extend_from_slice(&shape);
            Ok(omega.reshape(&s)?)
        }
        _ => Err(CoreError::Dimension(format!(
            "relaxed connection tensor has shape {shape:?}"
        ))),
    }
}

/// Differentiable PA input power, `[B, N_T]`. Hybrid `omega_soft` is
/// `[B, N_T, N_RF]` (or unbatched `[N_T, N_RF]`); FDP takes the soft antenna
/// mask `[B, N_T]`. Zero column sums contribute nothing.
pub fn pa_input_power_relaxed<'t>(
    template: &HardwareTemplate,
    omega_soft: Var<'t>,
    params: &EnergyParams,
) -> Result<Var<'t>> {
    let omega = as_batch(omega_soft, template.is_hybrid())?;
    let pre = params.pa_input_prefactor(template);
    if !template.is_hybrid() {
        return Ok(omega.scale(pre));
    }
    let shape = omega.shape();
    let inv = omega.sum_axis(1)?.recip_or_zero();
    let share = omega.mul(inv)?.sum_axis(2)?;
    Ok(share.reshape(&shape[..2])?.scale(pre))
}

/// `1ᵀΩ̄ᵀ1 / N_T` per sample, `[B]`.
pub fn expected_active_rf<'t>(omega_soft: Var<'t>) -> Result<Var<'t>> {
    let omega = as_batch(omega_soft, true)?;
    let shape = omega.shape();
    let total = omega.sum_axis(2)?.sum_axis(1)?.reshape(&shape[..1])?;
    Ok(total.scale(1.0 / shape[1] as f64))
}

/// `Σ_m (1 − Π_n (1 − Ω̄_nm))` per sample, `[B]`.
pub fn column_activity<'t>(omega_soft: Var<'t>) -> Result<Var<'t>> {
    let omega = as_batch(omega_soft, true)?;
    let shape = omega.shape();
    let idle = omega.neg().add_scalar(1.0).prod_axis(1)?;
    Ok(idle.neg().add_scalar(1.0).sum_axis(2)?.reshape(&shape[..1])?)
}

/// Differentiable total power per sample, `[B]` watts. `p_tx` is the
/// per-antenna output power `[B, N_T]`. The PA term clamps
/// `P_TX^n − P_in^n` at zero. For FDP the RF-chain count is `Σω̄` under
/// either rule.
pub fn total_power_relaxed<'t>(
    template: &HardwareTemplate,
    omega_soft: Var<'t>,
    p_tx: Var<'t>,
    params: &EnergyParams,
    rule: RfCountRule,
) -> Result<Var<'t>> {
    let omega = as_batch(omega_soft, template.is_hybrid())?;
    let p_tx = as_batch(p_tx, false)?;
    let b = omega.shape()[0];
    let n_rf = if template.is_hybrid() {
        match rule {
            RfCountRule::ConnectionAverage => expected_active_rf(omega)?,
            RfCountRule::ColumnActivity => column_activity(omega)?,
        }
    } else {
        omega.sum_axis(1)?.reshape(&[b])?
    };
    let p_in = pa_input_power_relaxed(template, omega, params)?;
    let pa = p_tx
        .sub(p_in)?
        .clamp_min(0.0)
        .scale(1.0 / params.pae)
        .sum_axis(1)?
        .reshape(&[b])?;
    Ok(n_rf.scale(rf_chain_power(params, template.b_dac)).add(pa)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HardwareCounts {
    pub rf_chains: usize,
    pub antennas: usize,
    pub phase_shifters: usize,
    pub combiners: usize,
    pub switches: usize,
}

pub fn hardware_counts(template: &HardwareTemplate) -> HardwareCounts {
    let (t, r) = (template.n_t, template.n_rf);
    let (rf_chains, phase_shifters, combiners, switches) = match template.kind {
        TemplateKind::Fdp => (t, 0, 0, 0),
        TemplateKind::Fc => (r, r * t, t, 0),
        TemplateKind::Fsa => (r, t, 0, 0),
        TemplateKind::Dsa => (r, t, 0, t),
    };
    HardwareCounts {
        rf_chains,
        antennas: t,
        phase_shifters,
        combiners,
        switches,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RmMethod {
    OFdp,
    PeAltMin,
    MoAltMin,
    EFdpNet,
    EHbfNet,
}

impl RmMethod {
    pub const ALL: [RmMethod; 5] = [
        RmMethod::OFdp,
        RmMethod::PeAltMin,
        RmMethod::MoAltMin,
        RmMethod::EFdpNet,
        RmMethod::EHbfNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RmMethod::OFdp => "O-FDP",
            RmMethod::PeAltMin => "PE-AltMin",
            RmMethod::MoAltMin => "MO-AltMin",
            RmMethod::EFdpNet => "E-FDP-Net",
            RmMethod::EHbfNet => "E-HBF-Net",
        }
    }
}

impl fmt::Display for RmMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RmMethod {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "ofdp" => Ok(RmMethod::OFdp),
            "pealtmin" => Ok(RmMethod::PeAltMin),
            "moaltmin" => Ok(RmMethod::MoAltMin),
            "efdpnet" => Ok(RmMethod::EFdpNet),
            "ehbfnet" => Ok(RmMethod::EHbfNet),
            _ => Err(CoreError::Contract(format!("unknown complexity method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmDims {
    pub n_u: u64,
    pub n_rf: u64,
    pub n_t: u64,
}

/// Architecture and iteration counts entering the multiplication counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmArch {
    pub conv: [u64; 3],
    pub fc: [u64; 2],
    pub kernel: u64,
    pub l_pe: u64,
    pub l_mo: u64,
    pub l_inner: u64,
}

impl Default for RmArch {
    fn default() -> Self {
        RmArch {
            conv: [16, 16, 8],
            fc: [1024, 1024],
            kernel: 3,
            l_pe: 15,
            l_mo: 2,
            l_inner: 30,
        }
    }
}

fn o_fdp(d: RmDims) -> f64 {
    // 4(2^U − 1)(2·U·T² + U²·T + T³/3), with the division done last
    let (u, t) = (d.n_u as u128, d.n_t as u128);
    let num = 4 * ((1u128 << u) - 1) * (3 * (2 * u * t * t + u * u * t) + t * t * t);
    num as f64 / 3.0
}

fn dnn_core(d: RmDims, a: RmArch) -> u128 {
    let [c1, c2, c3] = a.conv.map(u128::from);
    let [f1, f2] = a.fc.map(u128::from);
    let (t, u, k) = (d.n_t as u128, d.n_u as u128, a.kernel as u128);
    (2 * c1 + c1 * c2 + c2 * c3) * t * u * k * k + c3 * f1 * t * u + f1 * f2
}

/// Real multiplications of one precoder computation.
pub fn rm_complexity(method: RmMethod, dims: RmDims, arch: RmArch) -> Result<f64> {
    if dims.n_u == 0 || dims.n_rf == 0 || dims.n_t == 0 {
        return Err(CoreError::Domain(format!("dimensions must be positive: {dims:?}")));
    }
    if dims.n_u >= 100 {
        return Err(CoreError::Domain("user count too large for the exhaustive O-FDP count".into()));
    }
    let (u, r, t) = (dims.n_u as u128, dims.n_rf as u128, dims.n_t as u128);
    let f2 = arch.fc[1] as u128;
    Ok(match method {
        RmMethod::OFdp => o_fdp(dims),
        RmMethod::PeAltMin => {
            let per_iter = 8 * r * u * (t + u) + 22 * r * r * r;
            (arch.l_pe as u128 * per_iter) as f64 + o_fdp(dims)
        }
        RmMethod::MoAltMin => {
            let mo = 4 * arch.l_mo as u128 * t * u * r * (1 + arch.l_inner as u128 * t);
            mo as f64 + o_fdp(dims)
        }
        RmMethod::EFdpNet => (dnn_core(dims, arch) + f2 * (2 * u * t + t)) as f64,
        RmMethod::EHbfNet => (dnn_core(dims, arch) + f2 * (t * r + 2 * u * r + t * r)) as f64,
    })
}
