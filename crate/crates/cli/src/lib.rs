//! `hbf` command-line harness.

pub mod commands;
pub mod config;
pub mod csv_out;
pub mod error;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Method};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "hbf", version, about = "Energy-aware hybrid beamforming experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (and optionally corrupt) a channel batch.
    GenChannels(GenArgs),
    /// Train a learned precoder; writes a checkpoint and a metrics CSV.
    Train(TrainArgs),
    /// Exact per-sample evaluation of a checkpoint or a baseline.
    Eval(EvalArgs),
    /// Long-format CSV over the configured sweep axes.
    Sweep(SweepArgs),
    /// Real-multiplication counts, or hardware counts per template.
    Complexity(ComplexityArgs),
    /// Power breakdown of one configuration.
    Energy(EnergyArgs),
}

/// Config file plus overrides. Named flags are shorthands for `--set`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any key, e.g. `--set train.lr=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub n_rf: Option<usize>,
    #[arg(long)]
    pub n_users: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r_d: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub p_tx: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Vec<String> {
        let mut sets = self.sets.clone();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                sets.push(format!("{key}={v}"));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("system.template", self.template.clone());
        push("system.n_rf", self.n_rf.map(|v| v.to_string()));
        push("system.n_users", self.n_users.map(|v| v.to_string()));
        push("channel.samples", self.samples.map(|v| v.to_string()));
        push("channel.beta", self.beta.map(|v| format!("{v:?}")));
        push("objective.gamma", self.gamma.map(|v| format!("{v:?}")));
        push("objective.r_d", self.r_d.map(|v| format!("{v:?}")));
        push("objective.tau", self.tau.map(|v| format!("{v:?}")));
        push("train.epochs", self.epochs.map(|v| v.to_string()));
        push("energy.p_tx_w", self.p_tx.map(|v| format!("{v:?}")));
        push("out_dir", self.out_dir.as_ref().map(|p| format!("{:?}", p.display().to_string())));
        sets
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output file; `<out_dir>/channels.bin` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from a checkpoint up to the configured epoch count.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Method::Learned)]
    pub method: Method,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate every sample of this file instead of the held-out split.
    #[arg(long)]
    pub channels: Option<PathBuf>,
    /// Output file; `<out_dir>/eval_<method>.csv` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output file; `<out_dir>/sweep.csv` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long, default_value_t = 4)]
    pub n_u: u64,
    #[arg(long, default_value_t = 8)]
    pub n_rf: u64,
    #[arg(long, default_value_t = 64)]
    pub n_t: u64,
    /// Hardware component counts instead of multiplication counts.
    #[arg(long)]
    pub hardware: bool,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Whitespace-separated 0/1 connection matrix, one antenna per line.
    /// All allowed connections when absent.
    #[arg(long)]
    pub omega: Option<PathBuf>,
    /// Per-antenna transmit powers in watts, whitespace separated. The
    /// power budget split evenly over active antennas when absent.
    #[arg(long)]
    pub antenna_power: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenChannels(a) => commands::gen_channels(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Complexity(a) => commands::complexity(&a),
        Command::Energy(a) => commands::energy(&a),
    }
}
