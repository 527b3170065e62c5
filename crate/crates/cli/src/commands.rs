use std::path::{Path, PathBuf};

use hbf_core::channel;
use hbf_core::energy::{hardware_counts, rm_complexity, total_power_exact, RmArch, RmDims, RmMethod};
use hbf_core::hardware::{effective_budget, ConnectionMatrix, TemplateKind};
use hbf_core::learner::checkpoint;
use hbf_core::learner::{MetricsRow, TrainState};

use crate::config::{ExperimentConfig, Method};
use crate::csv_out::{self, hash_text, num};
use crate::error::{CliError, Result};
use crate::experiment::{self, SWEEP_COLUMNS};
use crate::{ComplexityArgs, EnergyArgs, EvalArgs, GenArgs, SweepArgs, TrainArgs};

fn log(line: &str) {
    eprintln!("{line}");
}

fn out_path(given: &Option<PathBuf>, cfg: &ExperimentConfig, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.out_dir.join(default))
}

pub fn gen_channels(args: &GenArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let batch = experiment::channels(&cfg)?;
    let path = out_path(&args.out, &cfg, "channels.bin");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    channel::save(&batch, &path)?;
    println!(
        "wrote {}: {} samples x {} users x {} antennas, beta {}, seed {}, mean element power {:.4e} W",
        path.display(),
        batch.n_samples,
        batch.n_users,
        batch.n_antennas,
        batch.beta,
        batch.seed,
        batch.mean_element_power()
    );
    Ok(())
}

pub const METRIC_COLUMNS: [&str; 12] = [
    "epoch",
    "train_loss",
    "val_loss",
    "val_sum_se_bps_hz",
    "val_power_w",
    "val_ee_bps_hz_per_w",
    "active_rf_expected",
    "lr",
    "exact_sum_se_bps_hz",
    "exact_power_w",
    "exact_ee_bps_hz_per_w",
    "exact_active_rf",
];

pub fn metric_cells(r: &MetricsRow) -> Vec<String> {
    let mut cells = vec![r.epoch.to_string()];
    cells.extend(
        [
            r.train_loss,
            r.val_loss,
            r.val_sum_se,
            r.val_power_w,
            r.val_ee,
            r.active_rf_expected,
            r.lr,
            r.exact_sum_se,
            r.exact_power_w,
            r.exact_ee,
            r.exact_active_rf,
        ]
        .map(num),
    );
    cells
}

/// Checks that a checkpoint belongs to this config, ignoring the epoch count.
fn check_resumable(state: &TrainState, cfg: &ExperimentConfig) -> Result<()> {
    let mut saved = state.config.clone();
    saved.epochs = cfg.train.epochs;
    if saved != cfg.train {
        return Err(CliError::Config("checkpoint was trained with a different [train] section".into()));
    }
    if state.model.objective != cfg.objective(cfg.system.template)? {
        return Err(CliError::Config("checkpoint was trained with a different objective or system".into()));
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let data = experiment::channels(&cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    let ckpt = cfg.out_dir.join("checkpoint.bin");
    let mut state = match &args.resume {
        Some(p) => {
            let s = checkpoint::load(p)?;
            check_resumable(&s, &cfg)?;
            log(&format!("resuming after epoch {}", s.epoch));
            s
        }
        None => TrainState::start(cfg.train.clone(), cfg.objective(cfg.system.template)?, &data)?,
    };
    state.config.epochs = cfg.train.epochs;
    let epochs = cfg.train.epochs;
    while state.epoch < epochs {
        let next = state.epoch + 1;
        state.run_epochs(&data, next, |r| {
            log(&format!(
                "epoch {next}/{epochs} train {:.4} val {:.4} se {:.3} power {:.3} W active rf {:.2}",
                r.train_loss, r.val_loss, r.val_sum_se, r.val_power_w, r.active_rf_expected
            ))
        })?;
        checkpoint::save(&state, &ckpt)?;
    }
    if state.epoch == 0 || args.resume.is_some() {
        checkpoint::save(&state, &ckpt)?;
    }
    let rows: Vec<_> = state.history.iter().map(metric_cells).collect();
    let path = cfg.out_dir.join("metrics.csv");
    csv_out::write(&path, &cfg.hash("train"), &METRIC_COLUMNS, &rows)?;
    match state.best_epoch {
        Some(b) => {
            let r = state.history[b];
            println!(
                "best epoch {}: exact sum SE {:.4} b/s/Hz, power {:.4} W, EE {:.4} b/s/Hz/W",
                b + 1,
                r.exact_sum_se,
                r.exact_power_w,
                r.exact_ee
            );
        }
        None => println!("no epochs run"),
    }
    println!("wrote {} and {}", ckpt.display(), path.display());
    Ok(())
}

pub const EVAL_COLUMNS: [&str; 12] = [
    "sample",
    "sum_se_true_bps_hz",
    "sum_se_est_bps_hz",
    "active_rf",
    "active_antennas",
    "p_dac_w",
    "p_lpf_w",
    "p_lo_w",
    "p_pa_w",
    "total_power_w",
    "ee_bps_hz_per_w",
    "degenerate",
];

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    let model = match (args.method, &args.checkpoint) {
        (Method::Learned, None) => {
            return Err(CliError::Config("--method learned needs --checkpoint".into()));
        }
        (Method::Learned, Some(p)) => {
            let state = checkpoint::load(p)?;
            // evaluation follows the system the model was trained for
            let obj = state.model.objective;
            cfg.system.template = obj.template.kind;
            cfg.energy = obj.energy;
            cfg.train.train_fraction = state.config.train_fraction;
            Some(state.best_model())
        }
        (_, _) => None,
    };
    let data = match &args.channels {
        Some(f) => channel::load(f)?,
        None => experiment::validation_split(&cfg, &experiment::channels(&cfg)?)?,
    };
    if let Some(m) = &model {
        if data.n_antennas != m.objective.template.n_t || data.n_users != m.spec.n_u {
            return Err(CliError::Config(format!(
                "channels have {} users x {} antennas, the model expects {} x {}",
                data.n_users, data.n_antennas, m.spec.n_u, m.objective.template.n_t
            )));
        }
    }
    let results = experiment::run_method(&cfg, args.method, model.as_ref(), &data)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(s, r)| {
            let (e, p) = (&r.eval, &r.eval.power);
            vec![
                s.to_string(),
                num(e.se_true),
                num(e.se_est),
                num(p.n_active_rf),
                p.n_active_ant.to_string(),
                num(p.p_dac_w),
                num(p.p_lpf_w),
                num(p.p_lo_w),
                num(p.p_pa_w),
                num(p.total_w),
                num(e.ee),
                u8::from(r.degenerate).to_string(),
            ]
        })
        .collect();
    let path = out_path(&args.out, &cfg, &format!("eval_{}.csv", args.method));
    let extra = format!("eval method={} checkpoint={}", args.method, args.checkpoint.is_some());
    csv_out::write(&path, &cfg.hash(&extra), &EVAL_COLUMNS, &rows)?;
    let evals: Vec<_> = results.iter().map(|r| r.eval).collect();
    let m = hbf_core::evaluate::summarize(&evals);
    let degenerate = results.iter().filter(|r| r.degenerate).count();
    println!(
        "{}: {} samples, mean sum SE {:.4} (true) {:.4} (est) b/s/Hz, power {:.4} W, active rf {:.3}, antennas {:.2}, EE {:.4} b/s/Hz/W, {degenerate} degenerate",
        args.method, m.n, m.se_true, m.se_est, m.power_w, m.active_rf, m.active_ant, m.ee
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let rows = experiment::sweep(&cfg, log)?;
    let cells: Vec<_> = rows.iter().map(|r| r.cells()).collect();
    let path = out_path(&args.out, &cfg, "sweep.csv");
    csv_out::write(&path, &cfg.hash("sweep"), &SWEEP_COLUMNS, &cells)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

/// Rounds to three significant figures.
pub fn three_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(2 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

pub fn complexity_table(args: &ComplexityArgs) -> Result<String> {
    let dims_text = format!("n_u={} n_rf={} n_t={}", args.n_u, args.n_rf, args.n_t);
    if args.hardware {
        let (n_t, n_rf) = (args.n_t as usize, args.n_rf as usize);
        let rows = TemplateKind::ALL
            .iter()
            .map(|&kind| {
                let rf = if kind.is_hybrid() { n_rf } else { n_t };
                let t = hbf_core::hardware::HardwareTemplate::new(kind, n_t, rf)?;
                let c = hardware_counts(&t);
                Ok(vec![
                    kind.to_string(),
                    c.rf_chains.to_string(),
                    c.antennas.to_string(),
                    c.phase_shifters.to_string(),
                    c.combiners.to_string(),
                    c.switches.to_string(),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let cols = ["template", "rf_chains", "antennas", "phase_shifters", "combiners", "switches"];
        return Ok(csv_out::render(&hash_text(&format!("hardware {dims_text}")), &cols, &rows));
    }
    let dims = RmDims {
        n_u: args.n_u,
        n_rf: args.n_rf,
        n_t: args.n_t,
    };
    let rows = RmMethod::ALL
        .iter()
        .map(|&m| {
            let rm = rm_complexity(m, dims, RmArch::default())?;
            Ok(vec![m.to_string(), num(rm), num(three_sig(rm / 1e6))])
        })
        .collect::<Result<Vec<_>>>()?;
    let cols = ["method", "real_multiplications", "millions_3sf"];
    Ok(csv_out::render(&hash_text(&format!("complexity {dims_text}")), &cols, &rows))
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn complexity(args: &ComplexityArgs) -> Result<()> {
    write_or_print(&args.out, &complexity_table(args)?)
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|w| {
            w.parse::<f64>()
                .map_err(|_| CliError::Config(format!("{}: '{w}' is not a number", path.display())))
        })
        .collect()
}

pub fn energy(args: &EnergyArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let t = cfg.template(cfg.system.template)?;
    let (rows, cols) = t.connection_shape();
    let omega = match &args.omega {
        None => t.full_connection(),
        Some(p) => {
            let entries = read_numbers(p)?
                .into_iter()
                .map(|v| match v {
                    0.0 => Ok(false),
                    1.0 => Ok(true),
                    _ => Err(CliError::Config(format!("connection entries must be 0 or 1, got {v}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            ConnectionMatrix::new(rows, cols, entries)?
        }
    };
    omega.validate(&t)?;
    let active = omega.active_rows();
    let p_ant = match &args.antenna_power {
        Some(p) => read_numbers(p)?,
        None => {
            let n_on = active.iter().filter(|&&a| a).count();
            let budget = effective_budget(&omega, &t, cfg.energy.p_tx_w);
            active
                .iter()
                .map(|&a| if a { budget / n_on as f64 } else { 0.0 })
                .collect()
        }
    };
    let b = total_power_exact(&t, &omega, &p_ant, &cfg.energy)?;
    print!("{}", b.report());
    let columns = [
        "template",
        "active_rf",
        "active_antennas",
        "p_dac_w",
        "p_lpf_w",
        "p_lo_w",
        "p_pa_w",
        "total_power_w",
    ];
    let row = vec![
        t.kind.to_string(),
        num(b.n_active_rf),
        b.n_active_ant.to_string(),
        num(b.p_dac_w),
        num(b.p_lpf_w),
        num(b.p_lo_w),
        num(b.p_pa_w),
        num(b.total_w),
    ];
    let omega_text: String = omega.entries().iter().map(|&e| if e { '1' } else { '0' }).collect();
    let p_text: Vec<String> = p_ant.iter().map(|&p| num(p)).collect();
    let extra = format!("energy omega={omega_text} p={}", p_text.join(" "));
    let path = out_path(&args.out, &cfg, "energy.csv");
    csv_out::write(&path, &cfg.hash(&extra), &columns, &[row])?;
    println!("wrote {}", path.display());
    Ok(())
}
