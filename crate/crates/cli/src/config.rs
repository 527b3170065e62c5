//! Experiment configuration: a TOML file with dotted sections, overridden
//! by `key.path=value` assignments from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hbf_core::channel::GeometryConfig;
use hbf_core::energy::{dbm_to_watts, EnergyParams, RfCountRule};
use hbf_core::hardware::{HardwareTemplate, TemplateKind, DEFAULT_Q_BITS};
use hbf_core::learner::{default_gamma, Objective, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for channel generation and CSI corruption.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub system: SystemConfig,
    pub geometry: GeometryConfig,
    pub channel: ChannelConfig,
    pub energy: EnergyParams,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            system: SystemConfig::default(),
            geometry: GeometryConfig::default(),
            channel: ChannelConfig::default(),
            energy: EnergyParams::default(),
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub template: TemplateKind,
    pub n_rf: usize,
    pub n_users: usize,
    /// Receiver noise power, dBm.
    pub noise_dbm: f64,
    pub q_bits: u32,
    /// DAC resolution; the template default when absent.
    pub b_dac: Option<u32>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            template: TemplateKind::Fc,
            n_rf: 8,
            n_users: 4,
            noise_dbm: -130.0,
            q_bits: DEFAULT_Q_BITS,
            b_dac: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub samples: usize,
    pub beta: f64,
    /// CSI error variance σ_e²; the mean element power of the batch when absent.
    pub error_variance: Option<f64>,
    /// Load channels from this file instead of generating them.
    pub file: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            samples: 20_000,
            beta: 0.0,
            error_variance: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Power weight; follows the target SE when absent.
    pub gamma: Option<f64>,
    pub r_d: f64,
    pub tau: f64,
    pub rf_rule: RfCountRule,
    pub quantize: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            gamma: None,
            r_d: 15.0,
            tau: 0.5,
            rf_rule: RfCountRule::ConnectionAverage,
            quantize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Learned,
    FdpBaseline,
    PeAltmin,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::FdpBaseline => "fdp_baseline",
            Method::PeAltmin => "pe_altmin",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r_d: Vec<f64>,
    pub beta: Vec<f64>,
    pub p_tx: Vec<f64>,
    pub n_users: Vec<usize>,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            r_d: vec![1.0, 3.0, 5.0],
            beta: vec![0.0],
            p_tx: vec![10.0],
            n_users: vec![4],
            methods: vec![Method::Learned, Method::FdpBaseline, Method::PeAltmin],
        }
    }
}

/// Sets `dotted.key` in `table`. The value is read as a TOML literal, and
/// as a bare string when that fails.
fn assign(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (defaults when absent), applies `overrides` in order and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            assign(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.energy.validate()?;
        self.train.validate()?;
        self.template(self.system.template)?;
        if self.system.n_users == 0 || self.system.n_users > self.system.n_rf {
            return Err(CliError::Config(format!(
                "need 1 <= n_users <= n_rf, got {} users and {} chains",
                self.system.n_users, self.system.n_rf
            )));
        }
        if !self.system.noise_dbm.is_finite() {
            return Err(CliError::Config("noise_dbm must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.channel.beta) {
            return Err(CliError::Config(format!("beta must lie in [0, 1], got {}", self.channel.beta)));
        }
        if let Some(f) = &self.channel.file {
            if !f.is_file() {
                return Err(CliError::Config(format!("channel file {} does not exist", f.display())));
            }
        }
        self.objective(self.system.template)?.validate()?;
        let s = &self.sweep;
        if s.r_d.is_empty() || s.beta.is_empty() || s.p_tx.is_empty() || s.n_users.is_empty() || s.methods.is_empty() {
            return Err(CliError::Config("sweep lists must be non-empty".into()));
        }
        if s.r_d.iter().any(|&r| !(r > 0.0)) || s.p_tx.iter().any(|&p| !(p > 0.0)) {
            return Err(CliError::Config("sweep r_d and p_tx values must be positive".into()));
        }
        if s.beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(CliError::Config("sweep beta values must lie in [0, 1]".into()));
        }
        if s.n_users.iter().any(|&u| u == 0 || u > self.system.n_rf) {
            return Err(CliError::Config("sweep n_users values must lie in 1..=n_rf".into()));
        }
        Ok(())
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.system.noise_dbm)
    }

    /// Template of `kind` on the configured array. FDP gets one chain per antenna.
    pub fn template(&self, kind: TemplateKind) -> Result<HardwareTemplate> {
        let n_t = self.geometry.n_antennas();
        let n_rf = if kind.is_hybrid() { self.system.n_rf } else { n_t };
        let mut t = HardwareTemplate::new(kind, n_t, n_rf)?.with_q_bits(self.system.q_bits)?;
        if let Some(b) = self.system.b_dac {
            t = t.with_b_dac(b)?;
        }
        Ok(t)
    }

    pub fn gamma(&self) -> f64 {
        self.objective.gamma.unwrap_or_else(|| default_gamma(self.objective.r_d))
    }

    pub fn objective(&self, kind: TemplateKind) -> Result<Objective> {
        let o = &self.objective;
        let obj = Objective {
            template: self.template(kind)?,
            energy: self.energy,
            sigma2: self.noise_w(),
            gamma: self.gamma(),
            r_d: o.r_d,
            tau: o.tau,
            rf_rule: o.rf_rule,
            quantize: o.quantize,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config plus command-specific `extra` text.
    /// The output directory does not take part.
    pub fn hash(&self, extra: &str) -> String {
        let mut h = Sha256::new();
        let cfg = ExperimentConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        h.update(cfg.to_toml().as_bytes());
        h.update(extra.as_bytes());
        format!("{:x}", h.finalize())
    }
}

impl FromStr for ExperimentConfig {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
