//! Acceptance criteria 1 to 9. Each test prints one PASS/FAIL line (written
//! straight to stdout so it survives output capture) and then asserts.
//!
//! Training criteria run on the 16-antenna toy in `configs/toy.toml`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use hbf_autodiff::gradcheck::{max_relative_error, numerical_gradient};
use hbf_autodiff::{concat, Result as AdResult, Tape, Tensor, Var, LEAKY_SLOPE};
use hbf_cli::config::{ExperimentConfig, Method};
use hbf_cli::experiment;
use hbf_core::channel::{generate, GeometryConfig};
use hbf_core::energy::{
    dac_power, hardware_counts, lpf_power, rm_complexity, total_power_exact, total_power_relaxed, EnergyParams,
    HardwareCounts, RfCountRule, RmArch, RmDims, RmMethod,
};
use hbf_core::hardware::{CMat, ConnectionMatrix, HardwareTemplate, TemplateKind, C64};
use hbf_core::learner::features::features;
use hbf_core::learner::gumbel::GumbelNoise;
use hbf_core::learner::network::{forward, Hidden, NetworkSpec, ParamSet};
use hbf_core::learner::objective::{loss, Objective};
use hbf_core::metrics::{sinr_fdp, sinr_hbf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, title: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n} ({title}): {verdict} | {detail}").unwrap();
    out.flush().unwrap();
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn toy() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    ExperimentConfig::load(Some(&path), &[]).unwrap()
}

fn quiet(_: &str) {}

#[test]
fn criterion_1_complexity_audit() {
    let dims = RmDims { n_u: 4, n_rf: 8, n_t: 64 };
    let rm = |m| rm_complexity(m, dims, RmArch::default()).unwrap();
    // 3 significant figures, cut rather than rounded: the listed pair
    // 5,218,304 ↔ 5.21e6 only agrees that way
    let three_sf = |x: f64| {
        let unit = 10f64.powi(x.log10().floor() as i32 - 2);
        (x / unit).floor() * unit / 1e6
    };
    let table = [
        (RmMethod::OFdp, 7_270_400.0, 7.27),
        (RmMethod::MoAltMin, 38_744_064.0, 38.7),
        (RmMethod::EFdpNet, 4_694_016.0, 4.69),
        (RmMethod::EHbfNet, 5_218_304.0, 5.21),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (m, exact, printed) in table {
        let v = rm(m);
        let agree = v == exact && (three_sf(v) - printed).abs() < 1e-9;
        ok &= agree;
        detail.push(format!("{m} {v} ({})", three_sf(v)));
    }
    // PE-AltMin: the formula value, which differs from the printed 8.48e6
    let pe = rm(RmMethod::PeAltMin);
    ok &= pe == 7_700_480.0;
    detail.push(format!("PE-AltMin {pe} (table 8.48e6, logged)"));
    report(1, "complexity audit", ok, &detail.join(", "));
    assert!(ok);
}

#[test]
fn criterion_2_energy_spot_values() {
    let p = EnergyParams::default();
    // hand evaluation from the listed constants
    let fom_d = 54.5e-15;
    let f_s = 0.5e9;
    let p_d6 = fom_d * f_s * 64.0;
    let p_d4 = fom_d * f_s * 16.0;
    let p_l = 1.4e-3 * 0.5;
    let p_lo = 10e-3;
    let p_bb = 10f64.powf(-5.6 / 10.0) * 1e-3;
    let il_m = 10f64.powf(0.55);
    let fdp_total = 64.0 * (p_l + p_lo + p_d4) + 64.0 * (10.0 / 64.0 - p_bb / il_m) / 0.36;

    let t = HardwareTemplate::new(TemplateKind::Fdp, 64, 64).unwrap();
    let b = total_power_exact(&t, &ConnectionMatrix::from_mask(vec![true; 64]), &[10.0 / 64.0; 64], &p).unwrap();
    let checks = [
        ("P_D(6)", dac_power(&p, 6), p_d6, 1.744e-3),
        ("P_D(4)", dac_power(&p, 4), p_d4, 0.436e-3),
        ("P_L", lpf_power(&p), p_l, 0.7e-3),
        ("FDP total", b.total_w, fdp_total, 28.5),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, code, hand, listed) in checks {
        let good = rel(code, hand) < 1e-3 && rel(code, listed) < 1e-3;
        ok &= good;
        detail.push(format!("{name} {code:.6e} (hand {hand:.6e}, listed {listed:e})"));
    }
    report(2, "energy spot values", ok, &detail.join(", "));
    assert!(ok);
}

fn random_omega(rng: &mut ChaCha8Rng, t: &HardwareTemplate) -> ConnectionMatrix {
    let (rows, cols) = t.connection_shape();
    let mut o = ConnectionMatrix::zeros(rows, cols);
    for n in 0..rows {
        match t.kind {
            TemplateKind::Fdp => o.set(n, 0, rng.random_bool(0.6)),
            TemplateKind::Fc => {
                for m in 0..cols {
                    o.set(n, m, rng.random_bool(0.5));
                }
            }
            TemplateKind::Fsa => o.set(n, t.fsa_chain(n), rng.random_bool(0.6)),
            TemplateKind::Dsa => {
                if rng.random_bool(0.7) {
                    let m = rng.random_range(0..cols);
                    o.set(n, m, true);
                }
            }
        }
    }
    o
}

#[test]
fn criterion_3_relaxed_exact_consistency() {
    let p = EnergyParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for i in 0..1200 {
        let kind = TemplateKind::ALL[i % 4];
        let n_t = rng.random_range(4..=32);
        let n_rf = rng.random_range(1..=8.min(n_t));
        let t = HardwareTemplate::new(kind, n_t, if kind.is_hybrid() { n_rf } else { n_t }).unwrap();
        let omega = random_omega(&mut rng, &t);
        let p_tx: Vec<f64> = omega
            .active_rows()
            .iter()
            .map(|&a| if a { rng.random_range(1e-3..2.0) } else { 0.0 })
            .collect();
        let exact = total_power_exact(&t, &omega, &p_tx, &p).unwrap().total_w;
        let tape = Tape::new();
        let (rows, cols) = t.connection_shape();
        let shape = if t.is_hybrid() { vec![rows, cols] } else { vec![rows] };
        let o = tape.constant(Tensor::new(shape, omega.as_f64()).unwrap());
        let x = tape.constant(Tensor::vector(p_tx));
        let relaxed = total_power_relaxed(&t, o, x, &p, RfCountRule::ColumnActivity)
            .unwrap()
            .value()
            .data()[0];
        let err = if exact == 0.0 { relaxed.abs() } else { rel(relaxed, exact) };
        worst = worst.max(err);
        cases += 1;
    }
    let ok = worst < 1e-10;
    report(3, "relaxed-exact consistency", ok, &format!("{cases} random binary configurations, worst relative gap {worst:.3e}"));
    assert!(ok);
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn away_from(rng: &mut ChaCha8Rng, shape: &[usize], kink: f64) -> Tensor {
    let mut t = random(rng, shape, -2.0, 2.0);
    for v in t.data_mut() {
        if (*v - kink).abs() < 0.05 {
            *v = kink + 0.1f64.copysign(*v - kink);
        }
    }
    t
}

fn output_weights(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0).collect()).unwrap()
}

/// Worst relative error of d(sum(w ⊙ f(inputs)))/d(input) over all inputs.
fn gradient_error(inputs: &[Tensor], f: &dyn for<'t> Fn(&[Var<'t>]) -> AdResult<Var<'t>>) -> f64 {
    let value = |xs: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let y = f(&vars).unwrap();
        y.mul(tape.constant(output_weights(&y.shape()))).unwrap().sum().item()
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let y = f(&vars).unwrap();
    let l = y.mul(tape.constant(output_weights(&y.shape()))).unwrap().sum();
    let grads = tape.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let num = numerical_gradient(
            |p| {
                let mut xs = inputs.to_vec();
                xs[i] = p.clone();
                value(&xs)
            },
            &inputs[i],
            1e-5,
        );
        worst = worst.max(max_relative_error(&grads.get_or_zeros(*v), &num, 1e-6));
    }
    worst
}

type Case = (&'static str, Vec<Tensor>, Box<dyn for<'t> Fn(&[Var<'t>]) -> AdResult<Var<'t>>>);

fn primitive_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut r = |shape: &[usize], lo, hi| random(&mut rng, shape, lo, hi);
    let a = r(&[3, 4], -2.0, 2.0);
    let b = r(&[3, 4], -2.0, 2.0);
    let pos = r(&[3, 4], 0.3, 2.0);
    let row = r(&[1, 4], 0.5, 2.0);
    let cube = r(&[2, 3, 4], -2.0, 2.0);
    let lhs = r(&[5, 3, 4], -2.0, 2.0);
    let rhs = r(&[4, 2], -2.0, 2.0);
    let img = r(&[2, 2, 5, 3], -2.0, 2.0);
    let ker = r(&[3, 2, 3, 3], -2.0, 2.0);
    let mut rng2 = ChaCha8Rng::seed_from_u64(5);
    let kinked = away_from(&mut rng2, &[3, 4], 0.0);
    let clamped = away_from(&mut rng2, &[3, 4], 0.3);
    vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|v| v[0].add(v[1]))),
        ("sub", vec![a.clone(), row.clone()], Box::new(|v| v[0].sub(v[1]))),
        ("mul", vec![a.clone(), b.clone()], Box::new(|v| v[0].mul(v[1]))),
        ("div", vec![a.clone(), pos.clone()], Box::new(|v| v[0].div(v[1]))),
        ("div broadcast", vec![a.clone(), row.clone()], Box::new(|v| v[0].div(v[1]))),
        ("neg", vec![a.clone()], Box::new(|v| Ok(v[0].neg()))),
        ("scale", vec![a.clone()], Box::new(|v| Ok(v[0].scale(-1.3)))),
        ("add_scalar", vec![a.clone()], Box::new(|v| Ok(v[0].add_scalar(2.0)))),
        ("powf", vec![pos.clone()], Box::new(|v| Ok(v[0].powf(1.7)))),
        ("square", vec![a.clone()], Box::new(|v| Ok(v[0].square()))),
        ("exp", vec![a.clone()], Box::new(|v| Ok(v[0].exp()))),
        ("ln", vec![pos.clone()], Box::new(|v| Ok(v[0].ln()))),
        ("log2", vec![pos.clone()], Box::new(|v| Ok(v[0].log2()))),
        ("sigmoid", vec![a.clone()], Box::new(|v| Ok(v[0].sigmoid()))),
        ("sqrt", vec![pos.clone()], Box::new(|v| Ok(v[0].sqrt()))),
        ("cos", vec![a.clone()], Box::new(|v| Ok(v[0].cos()))),
        ("sin", vec![a.clone()], Box::new(|v| Ok(v[0].sin()))),
        ("recip_or_zero", vec![pos.clone()], Box::new(|v| Ok(v[0].recip_or_zero()))),
        ("leaky_relu", vec![kinked], Box::new(|v| Ok(v[0].leaky_relu(LEAKY_SLOPE)))),
        ("clamp_min", vec![clamped], Box::new(|v| Ok(v[0].clamp_min(0.3)))),
        ("sum", vec![cube.clone()], Box::new(|v| Ok(v[0].sum()))),
        ("mean", vec![cube.clone()], Box::new(|v| Ok(v[0].mean()))),
        ("sum_axis", vec![cube.clone()], Box::new(|v| v[0].sum_axis(1))),
        ("mean_axis", vec![cube.clone()], Box::new(|v| v[0].mean_axis(2))),
        ("prod_axis", vec![cube.clone()], Box::new(|v| v[0].prod_axis(2))),
        ("reshape", vec![cube.clone()], Box::new(|v| v[0].reshape(&[6, 4]))),
        ("transpose", vec![cube.clone()], Box::new(|v| v[0].transpose())),
        ("narrow", vec![cube.clone()], Box::new(|v| v[0].narrow(2, 1, 2))),
        ("concat", vec![a.clone(), b.clone()], Box::new(|v| concat(&[v[0], v[1]], 0))),
        ("matmul", vec![lhs, rhs], Box::new(|v| v[0].matmul(v[1]))),
        ("conv2d", vec![img, ker], Box::new(|v| v[0].conv2d(v[1]))),
    ]
}

/// Full training loss on an 8-antenna, 2-chain, 2-user toy.
fn full_loss_error(kind: TemplateKind, noise_seed: Option<u64>) -> f64 {
    let geo = GeometryConfig {
        n_y: 4,
        n_z: 2,
        ..Default::default()
    };
    let h = generate(&geo, 3, 2, 5).unwrap().h_est;
    let t = HardwareTemplate::new(kind, 8, if kind.is_hybrid() { 2 } else { 8 }).unwrap();
    let spec = NetworkSpec::new(&t, 2, Hidden::Mlp { widths: vec![6] }).unwrap();
    let params = ParamSet::init(&spec, 11, 0.5);
    let obj = Objective {
        template: t,
        energy: EnergyParams::default(),
        sigma2: 1e-16,
        gamma: 0.05,
        r_d: 3.0,
        tau: 0.5,
        rf_rule: RfCountRule::ConnectionAverage,
        quantize: false,
    };
    let x = features(&h).unwrap();
    let value = |p: &ParamSet| {
        let tape = Tape::new();
        let heads = forward(&spec, &p.on_tape(&tape, false), tape.constant(x.clone())).unwrap();
        let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
        let noise = rng.as_mut().map(|rng| GumbelNoise { rng, standardize: false });
        loss(&obj, &heads, &h, noise).unwrap().loss.item()
    };
    let tape = Tape::new();
    let vars = params.on_tape(&tape, true);
    let heads = forward(&spec, &vars, tape.constant(x.clone())).unwrap();
    let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
    let noise = rng.as_mut().map(|rng| GumbelNoise { rng, standardize: false });
    let grads = tape.backward(loss(&obj, &heads, &h, noise).unwrap().loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let num = numerical_gradient(
            |w| {
                let mut p = params.clone();
                p.tensors[i] = w.clone();
                value(&p)
            },
            &params.tensors[i],
            1e-5,
        );
        worst = worst.max(max_relative_error(&grads.get_or_zeros(*v), &num, 1e-6));
    }
    worst
}

#[test]
fn criterion_4_gradient_suite() {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failed = Vec::new();
    let cases = primitive_cases();
    let n_prim = cases.len();
    for (name, inputs, f) in cases {
        let e = gradient_error(&inputs, &*f);
        if e >= 1e-4 {
            failed.push(format!("{name} {e:.2e}"));
        }
        if e > worst.0 {
            worst = (e, name.to_string());
        }
    }
    for kind in TemplateKind::ALL {
        for noise in [None, Some(42)] {
            let e = full_loss_error(kind, noise);
            let name = format!("loss {kind} noise {}", noise.is_some());
            if e >= 1e-4 {
                failed.push(format!("{name} {e:.2e}"));
            }
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }
    let ok = failed.is_empty();
    let detail = format!(
        "{n_prim} primitives and 8 loss variants, worst {:.2e} ({}){}",
        worst.0,
        worst.1,
        if ok { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    report(4, "gradient suite", ok, &detail);
    assert!(ok);
}

fn random_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Row `u` of `h` is the conjugate-transposed channel of user `u`.
fn naive_sinr(h: &CMat, f: &CMat, sigma2: f64) -> Vec<f64> {
    let gain = |u: usize, j: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for n in 0..h.ncols() {
            let (a, b) = (h[(u, n)].re, h[(u, n)].im);
            let (c, d) = (f[(n, j)].re, f[(n, j)].im);
            re += a * c - b * d;
            im += a * d + b * c;
        }
        re * re + im * im
    };
    (0..h.nrows())
        .map(|u| {
            let interference: f64 = (0..f.ncols()).filter(|&j| j != u).map(|j| gain(u, j)).sum();
            gain(u, u) / (interference + sigma2)
        })
        .collect()
}

#[test]
fn criterion_5_sinr_oracle_and_hardware_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut compare = |got: Vec<f64>, want: Vec<f64>| {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    };
    for _ in 0..1000 {
        let n_u = rng.random_range(1..6);
        let n_t = rng.random_range(n_u..24);
        let h = random_cmat(&mut rng, n_u, n_t);
        let u = random_cmat(&mut rng, n_t, n_u);
        let s2 = rng.random_range(0.01..2.0);
        compare(sinr_fdp(&h, &u, s2).unwrap(), naive_sinr(&h, &u, s2));
    }
    for _ in 0..1000 {
        let n_u = rng.random_range(1..5);
        let n_rf = rng.random_range(n_u..9);
        let n_t = rng.random_range(n_rf..24);
        let h = random_cmat(&mut rng, n_u, n_t);
        let a = CMat::from_fn(n_t, n_rf, |_, _| {
            if rng.random_bool(0.7) {
                C64::from_polar(1.0, rng.random_range(0.0..6.3))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let w = random_cmat(&mut rng, n_rf, n_u);
        let s2 = rng.random_range(0.01..2.0);
        compare(sinr_hbf(&h, &a, &w, s2).unwrap(), naive_sinr(&h, &(&a * &w), s2));
    }
    let sinr_ok = worst < 1e-12;

    let mut counts_ok = true;
    for (n_t, n_rf) in [(64, 8), (16, 4), (128, 16)] {
        let c = |kind| hardware_counts(&HardwareTemplate::new(kind, n_t, if kind == TemplateKind::Fdp { n_t } else { n_rf }).unwrap());
        let hc = |rf_chains, phase_shifters, combiners, switches| HardwareCounts {
            rf_chains,
            antennas: n_t,
            phase_shifters,
            combiners,
            switches,
        };
        counts_ok &= c(TemplateKind::Fdp) == hc(n_t, 0, 0, 0);
        counts_ok &= c(TemplateKind::Fc) == hc(n_rf, n_rf * n_t, n_t, 0);
        counts_ok &= c(TemplateKind::Fsa) == hc(n_rf, n_t, 0, 0);
        counts_ok &= c(TemplateKind::Dsa) == hc(n_rf, n_t, 0, n_t);
    }
    let ok = sinr_ok && counts_ok;
    report(
        5,
        "SINR oracle and hardware counts",
        ok,
        &format!("2000 instances, worst relative gap {worst:.2e}; hardware table match: {counts_ok}"),
    );
    assert!(ok);
}

#[test]
fn criterion_6_learning_sanity() {
    // unconstrained: γ = 0, R_d = 15
    let mut cfg = toy();
    cfg.system.template = TemplateKind::Fdp;
    cfg.objective.gamma = Some(0.0);
    cfg.objective.r_d = 15.0;
    cfg.train.hidden = Hidden::Mlp { widths: vec![512, 512] };
    cfg.train.lr = 5e-3;
    cfg.train.epochs = 60;
    let data = experiment::channels(&cfg).unwrap();
    let val = experiment::validation_split(&cfg, &data).unwrap();
    let proxy = experiment::run_method(&cfg, Method::FdpBaseline, None, &val).unwrap();
    let proxy_se = proxy.iter().map(|r| r.eval.se_true).sum::<f64>() / proxy.len() as f64;
    let state = experiment::train_model(&cfg, &data, quiet).unwrap();
    let best = state.history[state.best_epoch.unwrap()];
    let ratio = best.exact_sum_se / proxy_se;
    let ok_a = ratio >= 0.85;

    // power-aware: γ = 0.1, R_d = 1
    let mut cfg = toy();
    cfg.system.template = TemplateKind::Fdp;
    cfg.objective.gamma = Some(0.1);
    cfg.objective.r_d = 1.0;
    let all_on = cfg.geometry.n_antennas() as f64;
    let state = experiment::train_model(&cfg, &data, quiet).unwrap();
    let row = state.history[state.best_epoch.unwrap()];
    let per_user = row.exact_sum_se / cfg.system.n_users as f64;
    let ok_b = row.active_rf_expected < all_on && (per_user - 1.0).abs() <= 0.5;

    let ok = ok_a && ok_b;
    report(
        6,
        "learning sanity",
        ok,
        &format!(
            "γ=0: learned {:.3} vs FDP proxy {proxy_se:.3} b/s/Hz ({:.1}%); γ=0.1, R_d=1: expected active chains {:.2} of {all_on}, exact per-user SE {per_user:.3}",
            best.exact_sum_se,
            100.0 * ratio,
            row.active_rf_expected
        ),
    );
    assert!(ok);
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

#[test]
fn criterion_7_tradeoff_monotonicity() {
    let mut cfg = toy();
    cfg.system.template = TemplateKind::Fdp;
    cfg.objective.gamma = None;
    cfg.sweep.r_d = vec![1.0, 3.0, 5.0];
    cfg.sweep.methods = vec![Method::Learned];
    let rows = experiment::sweep(&cfg, quiet).unwrap();
    let power: Vec<f64> = rows.iter().map(|r| r.power_w).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.se_true).collect();
    let ok = rows.len() == 3 && nondecreasing(&power) && nondecreasing(&se);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("R_d={} γ={:.4}: {:.3} W, SE {:.3}", r.r_d.unwrap(), r.gamma.unwrap(), r.power_w, r.se_true))
        .collect();
    report(7, "trade-off monotonicity", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_8_imperfect_csi_robustness() {
    let mut cfg = toy();
    cfg.system.template = TemplateKind::Fc;
    cfg.objective.gamma = Some(0.0);
    cfg.sweep.r_d = vec![15.0];
    cfg.sweep.beta = vec![0.0, 0.25, 0.5];
    cfg.sweep.methods = vec![Method::Learned, Method::FdpBaseline, Method::PeAltmin];
    let rows = experiment::sweep(&cfg, quiet).unwrap();
    let series = |m: Method| -> Vec<f64> { rows.iter().filter(|r| r.method == m).map(|r| r.se_true).collect() };
    let mut ok = true;
    let mut detail = Vec::new();
    for m in cfg.sweep.methods.clone() {
        let s = series(m);
        // non-increasing up to 3% run-to-run noise
        let mono = s.len() == 3 && s.windows(2).all(|w| w[1] <= w[0] * 1.03);
        ok &= mono;
        detail.push(format!("{m} {:.3}/{:.3}/{:.3}", s[0], s[1], s[2]));
    }
    let drop = |m| {
        let s = series(m);
        (s[0] - s[2]) / s[0]
    };
    let (learned, pe) = (drop(Method::Learned), drop(Method::PeAltmin));
    ok &= learned < pe;
    detail.push(format!("degradation at β=0.5: learned {:.1}%, pe_altmin {:.1}%", 100.0 * learned, 100.0 * pe));
    report(8, "imperfect-CSI robustness", ok, &detail.join("; "));
    assert!(ok);
}

fn hbf(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hbf")).args(args).output().unwrap();
    assert!(out.status.success(), "hbf {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| -> PathBuf { dir.path().join(s) };
    let toy_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let toy_s = toy_path.to_str().unwrap();
    let small = ["--samples", "600", "--epochs", "2", "--set", "train.hidden.mlp.widths=[32,32]"];
    let mut same = Vec::new();
    for run in ["a", "b"] {
        let p = |s: &str| d(&format!("{run}/{s}")).to_str().unwrap().to_string();
        let mut outputs = Vec::new();
        outputs.push(hbf(&["complexity"]).stdout);
        outputs.push(hbf(&["complexity", "--hardware"]).stdout);
        hbf(&["energy", "--config", toy_s, "--out", &p("energy.csv")]);
        let mut gen = vec!["gen-channels", "--config", toy_s, "--beta", "0.3", "--out"];
        let chan = p("h.bin");
        gen.push(&chan);
        gen.extend_from_slice(&small[..2]);
        hbf(&gen);
        let out_dir = p("train");
        let mut train = vec!["train", "--config", toy_s, "--out-dir", &out_dir];
        train.extend_from_slice(&small);
        hbf(&train);
        let ckpt = p("train/checkpoint.bin");
        let ev = p("eval.csv");
        let mut eval = vec!["eval", "--config", toy_s, "--checkpoint", &ckpt, "--out", &ev];
        eval.extend_from_slice(&small);
        hbf(&eval);
        let pe = p("pe.csv");
        let mut eval_pe = vec!["eval", "--config", toy_s, "--method", "pe-altmin", "--out", &pe];
        eval_pe.extend_from_slice(&small);
        hbf(&eval_pe);
        let sw = p("sweep.csv");
        let mut sweep = vec!["sweep", "--config", toy_s, "--set", "sweep.beta=[0.0,0.3]", "--out", &sw];
        sweep.extend_from_slice(&small);
        hbf(&sweep);
        for f in ["energy.csv", "h.bin", "train/metrics.csv", "eval.csv", "pe.csv", "sweep.csv"] {
            outputs.push(std::fs::read(p(f)).unwrap());
        }
        same.push(outputs);
    }
    let names = ["complexity", "hardware", "energy", "channels", "train", "eval", "eval pe_altmin", "sweep"];
    let differing: Vec<&str> = names.iter().zip(same[0].iter().zip(&same[1])).filter(|(_, (a, b))| a != b).map(|(n, _)| *n).collect();
    let ok = differing.is_empty();
    report(
        9,
        "determinism",
        ok,
        &if ok {
            format!("{} outputs byte-identical across two runs", names.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    );
    assert!(ok);
}
