use hbf_core::baselines::{fdp_baseline, pe_altmin, regularized_zf, AltMinConfig};
use hbf_core::channel::{generate, GeometryConfig};
use hbf_core::hardware::{CMat, HardwareTemplate, TemplateKind};
use hbf_core::metrics::{sinr_fdp, sum_se};

const SIGMA2: f64 = 1e-16;
const P_TX: f64 = 10.0;

fn power(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn se(h: &CMat, f: &CMat) -> f64 {
    sum_se(&sinr_fdp(h, f, SIGMA2).unwrap())
}

#[test]
fn fdp_baseline_beats_plain_zf() {
    let batch = generate(&GeometryConfig::default(), 40, 4, 17).unwrap();
    for s in 0..batch.n_samples {
        let h = batch.true_matrix(s);
        let zf = regularized_zf(&h, 0.0, P_TX).unwrap();
        let u = fdp_baseline(&h, SIGMA2, P_TX).unwrap().effective_precoder().unwrap();
        assert!(se(&h, &u) >= se(&h, &zf) - 1e-12, "sample {s}");
        assert!((power(&u) / P_TX - 1.0).abs() < 1e-10);
    }
}

#[test]
fn baselines_are_deterministic() {
    let batch = generate(&GeometryConfig::default(), 3, 4, 2).unwrap();
    let t = HardwareTemplate::new(TemplateKind::Fc, 64, 8).unwrap();
    for s in 0..3 {
        let h = batch.true_matrix(s);
        assert_eq!(fdp_baseline(&h, SIGMA2, P_TX).unwrap(), fdp_baseline(&h, SIGMA2, P_TX).unwrap());
        let a = pe_altmin(&h, &t, &AltMinConfig::default(), SIGMA2, P_TX).unwrap();
        let b = pe_altmin(&h, &t, &AltMinConfig::default(), SIGMA2, P_TX).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.residuals, b.residuals);
    }
}

#[test]
fn residual_decreases_with_continuous_phases() {
    let geo = GeometryConfig { n_y: 4, n_z: 4, ..Default::default() };
    let batch = generate(&geo, 30, 2, 5).unwrap();
    let t = HardwareTemplate::new(TemplateKind::Fc, 16, 2).unwrap();
    let cfg = AltMinConfig { q_bits: None, tol: 1e-9, ..Default::default() };
    for s in 0..batch.n_samples {
        let out = pe_altmin(&batch.true_matrix(s), &t, &cfg, SIGMA2, P_TX).unwrap();
        assert!(out.residuals.len() >= 1 && out.residuals.len() <= cfg.max_iters + 1);
        for w in out.residuals.windows(2) {
            assert!(w[1] < w[0], "sample {s}: {:?}", out.residuals);
        }
    }
}

#[test]
fn residual_non_increasing_with_quantized_phases() {
    let batch = generate(&GeometryConfig::default(), 10, 4, 6).unwrap();
    let t = HardwareTemplate::new(TemplateKind::Fc, 64, 8).unwrap();
    for s in 0..batch.n_samples {
        let out = pe_altmin(&batch.true_matrix(s), &t, &AltMinConfig::default(), SIGMA2, P_TX).unwrap();
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn fsa_respects_one_connection_per_antenna() {
    let batch = generate(&GeometryConfig::default(), 10, 4, 7).unwrap();
    let t = HardwareTemplate::new(TemplateKind::Fsa, 64, 8).unwrap();
    for s in 0..batch.n_samples {
        let out = pe_altmin(&batch.true_matrix(s), &t, &AltMinConfig::default(), SIGMA2, P_TX).unwrap();
        let omega = out.solution.connection();
        assert!(omega.row_sums().iter().all(|&r| r == 1));
        assert!(omega.is_canonical(&t));
        let a = match &out.solution {
            hbf_core::hardware::PrecoderSolution::Hybrid { phases, omega, .. } => {
                hbf_core::hardware::assemble_analog(phases, omega).unwrap()
            }
            _ => unreachable!(),
        };
        for n in 0..64 {
            let nonzero = (0..8).filter(|&m| a[(n, m)].norm() > 0.0).count();
            assert_eq!(nonzero, 1);
            assert!((a[(n, t.fsa_chain(n))].norm() - 1.0).abs() < 1e-12);
        }
        assert!((out.solution.transmit_power().unwrap() / P_TX - 1.0).abs() < 1e-10);
    }
}

#[test]
fn fc_tracks_fdp_baseline() {
    for (geo, n_u, n_rf) in [
        (GeometryConfig { n_y: 4, n_z: 4, ..Default::default() }, 2, 4),
        (GeometryConfig::default(), 4, 8),
    ] {
        let n_t = geo.n_antennas();
        let batch = generate(&geo, 100, n_u, 8).unwrap();
        let t = HardwareTemplate::new(TemplateKind::Fc, n_t, n_rf).unwrap();
        let (mut fdp, mut fc) = (0.0, 0.0);
        for s in 0..batch.n_samples {
            let h = batch.true_matrix(s);
            fdp += se(&h, &fdp_baseline(&h, SIGMA2, P_TX).unwrap().effective_precoder().unwrap());
            let out = pe_altmin(&h, &t, &AltMinConfig::default(), SIGMA2, P_TX).unwrap();
            fc += se(&h, &out.solution.effective_precoder().unwrap());
        }
        assert!(fc >= 0.9 * fdp, "n_t {n_t}: fc {fc}, fdp {fdp}");
    }
}
