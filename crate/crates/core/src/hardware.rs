//! Transmitter topologies, connection matrices, precoders, phase
//! quantization and transmit-power normalization.

use std::f64::consts::TAU;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const DEFAULT_Q_BITS: u32 = 9;
pub const FDP_DAC_BITS: u32 = 4;
pub const HBF_DAC_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    /// Fully digital: one RF chain per antenna.
    Fdp,
    /// Fully connected hybrid.
    Fc,
    /// Fixed subarray hybrid.
    Fsa,
    /// Dynamic subarray hybrid (switch network in front of the phase shifters).
    Dsa,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [Self::Fdp, Self::Fc, Self::Fsa, Self::Dsa];

    pub fn is_hybrid(self) -> bool {
        self != TemplateKind::Fdp
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fdp => "fdp",
            Self::Fc => "fc",
            Self::Fsa => "fsa",
            Self::Dsa => "dsa",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fdp" => Ok(Self::Fdp),
            "fc" | "fc-hbf" | "fc_hbf" => Ok(Self::Fc),
            "fsa" | "fsa-hbf" | "fsa_hbf" => Ok(Self::Fsa),
            "dsa" | "dsa-hbf" | "dsa_hbf" => Ok(Self::Dsa),
            other => Err(CoreError::Domain(format!("unknown template kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareTemplate {
    pub kind: TemplateKind,
    pub n_t: usize,
    /// Number of RF chains (equal to `n_t` for FDP).
    pub n_rf: usize,
    /// Switch fan-in.
    pub psi: usize,
    /// Combiner fan-in.
    pub c: usize,
    pub q_bits: u32,
    pub b_dac: u32,
}

impl HardwareTemplate {
    /// Template with the canonical (ψ, c) tuple and default resolutions.
    /// `n_rf` is ignored for FDP.
    pub fn new(kind: TemplateKind, n_t: usize, n_rf: usize) -> Result<Self> {
        if n_t == 0 {
            return Err(CoreError::Domain("template needs at least one antenna".into()));
        }
        let (n_rf, psi, c, b_dac) = match kind {
            TemplateKind::Fdp => (n_t, 1, 1, FDP_DAC_BITS),
            TemplateKind::Fc => (n_rf, n_rf, n_rf, HBF_DAC_BITS),
            TemplateKind::Dsa => (n_rf, n_rf, 1, HBF_DAC_BITS),
            TemplateKind::Fsa => (n_rf, 1, 1, HBF_DAC_BITS),
        };
        if n_rf == 0 || n_rf > n_t {
            return Err(CoreError::Domain(format!(
                "need 1 <= n_rf <= n_t, got n_rf={n_rf}, n_t={n_t}"
            )));
        }
        Ok(HardwareTemplate {
            kind,
            n_t,
            n_rf,
            psi,
            c,
            q_bits: DEFAULT_Q_BITS,
            b_dac,
        })
    }

    pub fn with_q_bits(mut self, q_bits: u32) -> Result<Self> {
        if !(1..=30).contains(&q_bits) {
            return Err(CoreError::Domain(format!("q_bits must be in 1..=30, got {q_bits}")));
        }
        self.q_bits = q_bits;
        Ok(self)
    }

    pub fn with_b_dac(mut self, b_dac: u32) -> Result<Self> {
        if !(1..=32).contains(&b_dac) {
            return Err(CoreError::Domain(format!("b_dac must be in 1..=32, got {b_dac}")));
        }
        self.b_dac = b_dac;
        Ok(self)
    }

    pub fn is_hybrid(&self) -> bool {
        self.kind.is_hybrid()
    }

    /// Shape of the connection matrix: `(n_t, n_rf)` for hybrid, `(n_t, 1)` for FDP.
    pub fn connection_shape(&self) -> (usize, usize) {
        if self.is_hybrid() {
            (self.n_t, self.n_rf)
        } else {
            (self.n_t, 1)
        }
    }

    /// Connections present when everything is switched on: `N_RF·N_T` for
    /// FC, one per antenna otherwise.
    pub fn max_connections(&self) -> usize {
        match self.kind {
            TemplateKind::Fc => self.n_rf * self.n_t,
            _ => self.n_t,
        }
    }

    /// RF chain feeding antenna `n` in the fixed-subarray layout.
    pub fn fsa_chain(&self, n: usize) -> usize {
        n * self.n_rf / self.n_t
    }

    /// Whether connection (n, m) is physically available.
    pub fn allows(&self, n: usize, m: usize) -> bool {
        match self.kind {
            TemplateKind::Fsa => self.fsa_chain(n) == m,
            _ => true,
        }
    }

    /// Every antenna and RF chain switched on in the template's canonical layout.
    pub fn full_connection(&self) -> ConnectionMatrix {
        let (rows, cols) = self.connection_shape();
        match self.kind {
            TemplateKind::Fdp | TemplateKind::Fc => ConnectionMatrix::ones(rows, cols),
            // DSA starts from the same block layout as FSA
            TemplateKind::Fsa | TemplateKind::Dsa => {
                let mut omega = ConnectionMatrix::zeros(rows, cols);
                for n in 0..rows {
                    omega.set(n, self.fsa_chain(n), true);
                }
                omega
            }
        }
    }
}

/// Binary connection matrix, row-major. FDP uses a single column holding
/// the antenna mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl ConnectionMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<bool>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(CoreError::Dimension(format!(
                "connection matrix {rows}x{cols} given {} entries",
                entries.len()
            )));
        }
        Ok(ConnectionMatrix { rows, cols, entries })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        ConnectionMatrix {
            rows: mask.len(),
            cols: 1,
            entries: mask,
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        ConnectionMatrix {
            rows,
            cols,
            entries: vec![true; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ConnectionMatrix {
            rows,
            cols,
            entries: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[bool] {
        &self.entries
    }

    pub fn get(&self, n: usize, m: usize) -> bool {
        self.entries[n * self.cols + m]
    }

    pub fn set(&mut self, n: usize, m: usize, on: bool) {
        self.entries[n * self.cols + m] = on;
    }

    pub fn count_ones(&self) -> usize {
        self.entries.iter().filter(|&&e| e).count()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.entries
            .chunks(self.cols)
            .map(|r| r.iter().filter(|&&e| e).count())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.cols];
        for row in self.entries.chunks(self.cols) {
            for (s, &e) in sums.iter_mut().zip(row) {
                *s += e as usize;
            }
        }
        sums
    }

    pub fn active_rows(&self) -> Vec<bool> {
        self.row_sums().into_iter().map(|s| s > 0).collect()
    }

    pub fn active_columns(&self) -> usize {
        self.column_sums().into_iter().filter(|&s| s > 0).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as u8 as f64).collect()
    }

    /// Checks shape and the template's structural constraints. Antennas may
    /// be switched off (an all-zero row) in every template; FSA connections
    /// must lie on the fixed block layout and FSA/DSA antennas attach to at
    /// most one RF chain.
    pub fn validate(&self, template: &HardwareTemplate) -> Result<()> {
        let (rows, cols) = template.connection_shape();
        if (self.rows, self.cols) != (rows, cols) {
            return Err(CoreError::Dimension(format!(
                "{} template expects a {rows}x{cols} connection matrix, got {}x{}",
                template.kind, self.rows, self.cols
            )));
        }
        match template.kind {
            TemplateKind::Fdp | TemplateKind::Fc => Ok(()),
            TemplateKind::Fsa | TemplateKind::Dsa => {
                for (n, s) in self.row_sums().into_iter().enumerate() {
                    if s > 1 {
                        return Err(CoreError::Contract(format!(
                            "antenna {n} is connected to {s} RF chains"
                        )));
                    }
                    for m in 0..cols {
                        if self.get(n, m) && !template.allows(n, m) {
                            return Err(CoreError::Contract(format!(
                                "connection ({n}, {m}) is not available in the fixed subarray layout"
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// The strict hardware form: FC all-ones, FSA/DSA exactly one chain per antenna.
    pub fn is_canonical(&self, template: &HardwareTemplate) -> bool {
        if self.validate(template).is_err() {
            return false;
        }
        match template.kind {
            TemplateKind::Fdp => true,
            TemplateKind::Fc => self.entries.iter().all(|&e| e),
            TemplateKind::Fsa | TemplateKind::Dsa => self.row_sums().iter().all(|&s| s == 1),
        }
    }
}

/// Nearest grid angle `2πk/2^q`, `k ∈ {0, …, 2^q − 1}`. Ties go to the
/// smaller `k`; the input wraps modulo 2π.
pub fn quantize_angle(angle: f64, q_bits: u32) -> f64 {
    let levels = 1u64 << q_bits;
    let step = TAU / levels as f64;
    let t = angle.rem_euclid(TAU) / step;
    let mut k = t.floor();
    if t - k > 0.5 {
        k += 1.0;
    }
    (k as u64 % levels) as f64 * step
}

/// `e^{jφ_q}` for each raw angle (row-major `rows × cols`).
pub fn quantize_phases(raw_angles: &DMatrix<f64>, q_bits: u32) -> CMat {
    raw_angles.map(|a| C64::from_polar(1.0, quantize_angle(a, q_bits)))
}

/// `A = P_q ⊙ Ω`.
pub fn assemble_analog(phases: &CMat, omega: &ConnectionMatrix) -> Result<CMat> {
    if phases.shape() != (omega.rows(), omega.cols()) {
        return Err(CoreError::Dimension(format!(
            "phase matrix {:?} vs connection matrix {}x{}",
            phases.shape(),
            omega.rows(),
            omega.cols()
        )));
    }
    Ok(CMat::from_fn(omega.rows(), omega.cols(), |n, m| {
        if omega.get(n, m) {
            phases[(n, m)]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// Transmit-power budget scaled by the fraction of available connections
/// that are active (antennas for FDP).
pub fn effective_budget(omega: &ConnectionMatrix, template: &HardwareTemplate, p_tx: f64) -> f64 {
    omega.count_ones() as f64 * p_tx / template.max_connections() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderSolution {
    /// `u` is `N_T × N_U`; `mask` is the `N_T × 1` antenna mask.
    Digital { u: CMat, mask: ConnectionMatrix },
    /// `phases` is `N_T × N_RF` unit-modulus, `w` is `N_RF × N_U`.
    Hybrid {
        phases: CMat,
        omega: ConnectionMatrix,
        w: CMat,
    },
}

impl PrecoderSolution {
    pub fn connection(&self) -> &ConnectionMatrix {
        match self {
            PrecoderSolution::Digital { mask, .. } => mask,
            PrecoderSolution::Hybrid { omega, .. } => omega,
        }
    }

    /// The `N_T × N_U` precoder seen by the channel: `diag(ω)·U` or `(P_q ⊙ Ω)·W`.
    pub fn effective_precoder(&self) -> Result<CMat> {
        match self {
            PrecoderSolution::Digital { u, mask } => {
                if u.nrows() != mask.rows() || mask.cols() != 1 {
                    return Err(CoreError::Dimension(format!(
                        "precoder has {} rows, mask is {}x{}",
                        u.nrows(),
                        mask.rows(),
                        mask.cols()
                    )));
                }
                let mut out = u.clone();
                for (n, &on) in mask.entries().iter().enumerate() {
                    if !on {
                        out.row_mut(n).fill(C64::new(0.0, 0.0));
                    }
                }
                Ok(out)
            }
            PrecoderSolution::Hybrid { phases, omega, w } => {
                let a = assemble_analog(phases, omega)?;
                if a.ncols() != w.nrows() {
                    return Err(CoreError::Dimension(format!(
                        "analog precoder has {} columns, digital precoder {} rows",
                        a.ncols(),
                        w.nrows()
                    )));
                }
                Ok(a * w)
            }
        }
    }

    /// Output power of each antenna, `Σ_u |[AW]_{n,u}|²`.
    pub fn per_antenna_power(&self) -> Result<Vec<f64>> {
        let f = self.effective_precoder()?;
        Ok(f.row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum()).collect())
    }

    pub fn transmit_power(&self) -> Result<f64> {
        Ok(self.effective_precoder()?.iter().map(|z| z.norm_sqr()).sum())
    }

    fn scale_digital(&mut self, s: f64) {
        match self {
            PrecoderSolution::Digital { u, .. } => *u *= C64::new(s, 0.0),
            PrecoderSolution::Hybrid { w, .. } => *w *= C64::new(s, 0.0),
        }
    }

    /// Text report: antenna mask and per-antenna output power.
    pub fn report(&self) -> Result<String> {
        let power = self.per_antenna_power()?;
        let active = self.connection().active_rows();
        let mut out = String::new();
        let kind = match self {
            PrecoderSolution::Digital { .. } => "digital",
            PrecoderSolution::Hybrid { .. } => "hybrid",
        };
        let _ = writeln!(out, "precoder: {kind}");
        let _ = writeln!(
            out,
            "active antennas: {} / {}",
            active.iter().filter(|&&a| a).count(),
            active.len()
        );
        let _ = writeln!(out, "active rf chains: {}", self.connection().active_columns());
        let _ = writeln!(out, "transmit power_w: {:.6e}", power.iter().sum::<f64>());
        let _ = writeln!(out, "antenna,active,power_w");
        for (n, (p, a)) in power.iter().zip(&active).enumerate() {
            let _ = writeln!(out, "{n},{},{p:.6e}", *a as u8);
        }
        Ok(out)
    }
}

/// Scales `W` (or `U`) by one real factor so that `‖AW‖²_F == budget`.
pub fn normalize_power(solution: &PrecoderSolution, budget: f64) -> Result<PrecoderSolution> {
    if !(budget >= 0.0) {
        return Err(CoreError::Domain(format!("power budget must be >= 0, got {budget}")));
    }
    let current = solution.transmit_power()?;
    if current <= 0.0 || !current.is_finite() {
        return Err(CoreError::Degenerate(format!(
            "cannot normalize a precoder with transmit power {current}"
        )));
    }
    let mut out = solution.clone();
    out.scale_digital((budget / current).sqrt());
    Ok(out)
}
