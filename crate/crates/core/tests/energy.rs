use hbf_autodiff::gradcheck::{max_relative_error, numerical_gradient};
use hbf_autodiff::{Tape, Tensor};
use hbf_core::energy::{
    column_activity, dac_power, db_to_linear, dbm_to_watts, expected_active_rf, hardware_counts,
    linear_to_db, lpf_power, pa_dc_power, pa_input_power, pa_input_power_relaxed, rm_complexity,
    total_power_exact, total_power_relaxed, EnergyParams, HardwareCounts, RfCountRule, RmArch,
    RmDims, RmMethod,
};
use hbf_core::hardware::{ConnectionMatrix, HardwareTemplate, TemplateKind};
use hbf_core::CoreError;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// Table IV constants, written out independently of EnergyParams::default.
const FOM_D: f64 = 54.5e-15;
const F_S: f64 = 0.5e9;
const P_LO: f64 = 10e-3;
const P_L: f64 = 0.7e-3;

fn p_bb_out() -> f64 {
    10f64.powf(-5.6 / 10.0) * 1e-3
}

fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[test]
fn dac_spot_values() {
    let p = EnergyParams::default();
    assert!(rel(dac_power(&p, 6), 1.744e-3) < 1e-3);
    assert!(rel(dac_power(&p, 4), 0.436e-3) < 1e-3);
    assert!(rel(dac_power(&p, 6), FOM_D * F_S * 64.0) < 1e-12);
    assert!(rel(dac_power(&p, 8), 4.0 * dac_power(&p, 6)) < 1e-15);
}

#[test]
fn lpf_spot_values() {
    let mut p = EnergyParams::default();
    assert!(rel(lpf_power(&p), 0.7e-3) < 1e-12);
    p.lpf_order = 2;
    assert!(rel(lpf_power(&p), 1.4e-3) < 1e-12);
    p.f_c_hz = 0.0;
    assert_eq!(lpf_power(&p), 0.0);
}

#[test]
fn unit_conversions_round_trip() {
    for x in [-40.0, -5.6, 0.0, 3.7, 30.0] {
        assert!((linear_to_db(db_to_linear(x)) - x).abs() < 1e-12);
    }
    assert!(rel(dbm_to_watts(30.0), 1.0) < 1e-12);
    assert!(rel(dbm_to_watts(-5.6), p_bb_out()) < 1e-12);
}

#[test]
fn fc_pa_input_power() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fc, 64, 8).unwrap();
    let p_in = pa_input_power(&t, &ConnectionMatrix::ones(64, 8), &p).unwrap();
    let hand = p_bb_out() / (lin(1.8) * 1.0 * lin(3.7) * lin(5.5)) * 8.0 / 64.0;
    assert!(rel(hand, 2.73e-6) < 3e-3);
    for v in p_in {
        assert!(rel(v, hand) < 1e-12);
    }
}

#[test]
fn fdp_pa_input_power() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fdp, 64, 64).unwrap();
    let p_in = pa_input_power(&t, &ConnectionMatrix::from_mask(vec![true; 64]), &p).unwrap();
    let hand = 0.2754e-3 / 3.548;
    assert!(rel(hand, 77.6e-6) < 1e-3);
    assert!(p_in.iter().all(|&v| rel(v, p_bb_out() / lin(5.5)) < 1e-12));
    assert!(rel(p_in[0], hand) < 1e-3);
}

#[test]
fn fsa_drops_combiner_and_switch_losses() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fsa, 8, 2).unwrap();
    let p_in = pa_input_power(&t, &t.full_connection(), &p).unwrap();
    // each chain drives 4 antennas: share 1/4
    let hand = p_bb_out() / (lin(3.7) * lin(5.5)) / 4.0;
    assert!(p_in.iter().all(|&v| rel(v, hand) < 1e-12));
    // DSA keeps the switch loss, drops the combiner
    let d = HardwareTemplate::new(TemplateKind::Dsa, 8, 2).unwrap();
    let p_in = pa_input_power(&d, &d.full_connection(), &p).unwrap();
    let hand = p_bb_out() / (lin(1.0) * lin(3.7) * lin(5.5)) / 4.0;
    assert!(p_in.iter().all(|&v| rel(v, hand) < 1e-12));
}

#[test]
fn pa_dc_examples() {
    let dc = pa_dc_power(&[156.25e-3], &[0.0776e-3], 0.36).unwrap();
    assert!(rel(dc[0], 433.8e-3) < 1e-3);
    assert_eq!(pa_dc_power(&[0.2], &[0.2], 0.36).unwrap(), vec![0.0]);
    assert_eq!(pa_dc_power(&[0.3], &[0.0], 1.0).unwrap(), vec![0.3]);
    match pa_dc_power(&[1.0, 1e-6], &[1e-3, 1e-3], 0.36) {
        Err(CoreError::Infeasible { antenna, .. }) => assert_eq!(antenna, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fdp_total_at_64_antennas() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fdp, 64, 64).unwrap();
    let omega = ConnectionMatrix::from_mask(vec![true; 64]);
    let b = total_power_exact(&t, &omega, &[10.0 / 64.0; 64], &p).unwrap();
    // hand evaluation: 64 chains at b_D = 4, 64 PAs at 10/64 W each
    let rf = 64.0 * (P_L + P_LO + FOM_D * F_S * 16.0);
    let p_in = p_bb_out() / lin(5.5);
    let pa = 64.0 * (10.0 / 64.0 - p_in) / 0.36;
    assert!(rel(rf, 0.713) < 1e-3);
    assert!(rel(pa, 27.76) < 1e-3);
    assert!(rel(rf + pa, 28.5) < 2e-3);
    assert!(rel(b.total_w, rf + pa) < 1e-3);
    assert!(rel(b.total_w, rf + pa) < 1e-12);
    assert_eq!(b.n_active_ant, 64);
    assert_eq!(b.n_active_rf, 64.0);
}

#[test]
fn all_zero_connection_costs_nothing() {
    let p = EnergyParams::default();
    for kind in TemplateKind::ALL {
        let t = HardwareTemplate::new(kind, 8, 2).unwrap();
        let (r, c) = t.connection_shape();
        let omega = if kind == TemplateKind::Fdp {
            ConnectionMatrix::from_mask(vec![false; 8])
        } else {
            ConnectionMatrix::zeros(r, c)
        };
        let b = total_power_exact(&t, &omega, &[0.0; 8], &p).unwrap();
        assert_eq!(b.total_w, 0.0);
    }
}

#[test]
fn switching_off_one_fdp_chain() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fdp, 8, 8).unwrap();
    let p_tx = [0.3, 0.1, 0.2, 0.4, 0.25, 0.15, 0.05, 0.5];
    let all = total_power_exact(&t, &ConnectionMatrix::from_mask(vec![true; 8]), &p_tx, &p).unwrap();
    let mut mask = vec![true; 8];
    mask[3] = false;
    let mut reduced = p_tx;
    reduced[3] = 0.0;
    let fewer = total_power_exact(&t, &ConnectionMatrix::from_mask(mask), &reduced, &p).unwrap();
    let chain = P_L + P_LO + FOM_D * F_S * 16.0;
    let pa = (0.4 - p_bb_out() / lin(5.5)) / 0.36;
    assert!(rel(all.total_w - fewer.total_w, chain + pa) < 1e-10);
}

#[test]
fn inactive_antenna_may_not_radiate() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fdp, 2, 2).unwrap();
    let omega = ConnectionMatrix::from_mask(vec![true, false]);
    assert!(total_power_exact(&t, &omega, &[0.1, 0.1], &p).is_err());
}

#[test]
fn expected_active_rf_examples() {
    let tape = Tape::new();
    let v = |t: Tensor| expected_active_rf(tape.constant(t)).unwrap().value().data()[0];
    assert_eq!(v(Tensor::ones(&[64, 8])), 8.0);
    let mut one_col = Tensor::zeros(&[64, 8]);
    for n in 0..64 {
        one_col.data_mut()[n * 8 + 2] = 1.0;
    }
    assert_eq!(v(one_col), 1.0);
    assert_eq!(v(Tensor::full(&[64, 8], 0.5)), 4.0);
}

#[test]
fn relaxed_input_power_conventions() {
    let p = EnergyParams::default();
    let t = HardwareTemplate::new(TemplateKind::Fc, 64, 8).unwrap();
    let tape = Tape::new();
    let ones = pa_input_power_relaxed(&t, tape.constant(Tensor::ones(&[64, 8])), &p).unwrap();
    let exact = pa_input_power(&t, &ConnectionMatrix::ones(64, 8), &p).unwrap();
    for (a, b) in ones.value().data().iter().zip(&exact) {
        assert!(rel(*a, *b) < 1e-12);
    }
    let zeros = pa_input_power_relaxed(&t, tape.constant(Tensor::zeros(&[64, 8])), &p).unwrap();
    assert!(zeros.value().data().iter().all(|&v| v == 0.0));
}

/// A random binary Ω valid for `t`, plus per-antenna transmit powers that
/// are zero on inactive antennas.
fn random_case(t: &HardwareTemplate, bits: &[bool], powers: &[f64]) -> (ConnectionMatrix, Vec<f64>) {
    let (rows, cols) = t.connection_shape();
    let omega = match t.kind {
        TemplateKind::Fdp => ConnectionMatrix::from_mask(bits[..rows].to_vec()),
        TemplateKind::Fc => ConnectionMatrix::new(rows, cols, bits[..rows * cols].to_vec()).unwrap(),
        TemplateKind::Fsa => {
            let mut o = ConnectionMatrix::zeros(rows, cols);
            for n in 0..rows {
                o.set(n, t.fsa_chain(n), bits[n]);
            }
            o
        }
        TemplateKind::Dsa => {
            let mut o = ConnectionMatrix::zeros(rows, cols);
            for n in 0..rows {
                if bits[n] {
                    // pick a chain from the next bits
                    let m = (0..cols).fold(0, |acc, k| acc + bits[rows + n * cols + k] as usize) % cols;
                    o.set(n, m, true);
                }
            }
            o
        }
    };
    let active = omega.active_rows();
    let p_tx = active
        .iter()
        .zip(powers)
        .map(|(&on, &p)| if on { p } else { 0.0 })
        .collect();
    (omega, p_tx)
}

fn relaxed_total(t: &HardwareTemplate, omega: &ConnectionMatrix, p_tx: &[f64], p: &EnergyParams) -> f64 {
    let tape = Tape::new();
    let (rows, cols) = t.connection_shape();
    let shape = if t.is_hybrid() { vec![rows, cols] } else { vec![rows] };
    let o = tape.constant(Tensor::new(shape, omega.as_f64()).unwrap());
    let x = tape.constant(Tensor::vector(p_tx.to_vec()));
    total_power_relaxed(t, o, x, p, RfCountRule::ColumnActivity)
        .unwrap()
        .value()
        .data()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn relaxed_equals_exact_on_binary(
        kind in 0usize..4,
        n_t in 2usize..12,
        r in 1usize..5,
        bits in prop::collection::vec(any::<bool>(), 12 + 12 * 5),
        powers in prop::collection::vec(1e-3f64..2.0, 12),
    ) {
        let p = EnergyParams::default();
        let t = HardwareTemplate::new(TemplateKind::ALL[kind], n_t, r.min(n_t)).unwrap();
        let (omega, p_tx) = random_case(&t, &bits, &powers[..n_t]);
        let exact = total_power_exact(&t, &omega, &p_tx, &p).unwrap();
        let relaxed = relaxed_total(&t, &omega, &p_tx, &p);
        if exact.total_w == 0.0 {
            prop_assert_eq!(relaxed, 0.0);
        } else {
            prop_assert!(rel(relaxed, exact.total_w) < 1e-10, "{} vs {}", relaxed, exact.total_w);
        }
    }

    #[test]
    fn column_activity_counts_binary_columns(
        rows in 1usize..10,
        cols in 1usize..6,
        bits in prop::collection::vec(any::<bool>(), 60),
    ) {
        let omega = ConnectionMatrix::new(rows, cols, bits[..rows * cols].to_vec()).unwrap();
        let tape = Tape::new();
        let o = tape.constant(Tensor::new(vec![rows, cols], omega.as_f64()).unwrap());
        let v = column_activity(o).unwrap().value().data()[0];
        prop_assert_eq!(v, omega.active_columns() as f64);
    }

    #[test]
    fn rf_term_monotone_in_soft_entries(
        vals in prop::collection::vec(0.01f64..0.99, 12),
        idx in 0usize..12,
        bump in 0.0f64..0.5,
    ) {
        let p = EnergyParams::default();
        let t = HardwareTemplate::new(TemplateKind::Fc, 4, 3).unwrap();
        let tape = Tape::new();
        // PA term removed by using zero transmit power and no input power
        let p0 = EnergyParams { p_bb_out_w: 0.0, ..p };
        let eval = |v: Vec<f64>| {
            let o = tape.constant(Tensor::new(vec![4, 3], v).unwrap());
            let x = tape.constant(Tensor::zeros(&[4]));
            total_power_relaxed(&t, o, x, &p0, RfCountRule::ConnectionAverage).unwrap().item()
        };
        let mut raised = vals.clone();
        raised[idx] = (raised[idx] + bump).min(1.0);
        prop_assert!(eval(raised) >= eval(vals));
    }
}

#[test]
fn relaxed_total_gradient() {
    let p = EnergyParams::default();
    for (kind, rule) in [
        (TemplateKind::Fc, RfCountRule::ConnectionAverage),
        (TemplateKind::Fc, RfCountRule::ColumnActivity),
        (TemplateKind::Dsa, RfCountRule::ColumnActivity),
        (TemplateKind::Fdp, RfCountRule::ConnectionAverage),
    ] {
        let t = HardwareTemplate::new(kind, 4, 2).unwrap();
        let (rows, cols) = t.connection_shape();
        let shape = if t.is_hybrid() { vec![rows, cols] } else { vec![rows] };
        let n: usize = shape.iter().product();
        let omega = Tensor::new(shape, (0..n).map(|i| 0.2 + 0.6 * ((i * 7 % 11) as f64 / 11.0)).collect()).unwrap();
        let p_tx = Tensor::vector(vec![0.3, 0.2, 0.5, 0.1]);
        let f = |o: &Tensor| {
            let tape = Tape::new();
            let v = total_power_relaxed(&t, tape.constant(o.clone()), tape.constant(p_tx.clone()), &p, rule).unwrap();
            v.item()
        };
        let tape = Tape::new();
        let o = tape.param(omega.clone());
        let v = total_power_relaxed(&t, o, tape.constant(p_tx.clone()), &p, rule).unwrap();
        let g = tape.backward(v.sum()).unwrap().get_or_zeros(o);
        let num = numerical_gradient(f, &omega, 1e-6);
        assert!(max_relative_error(&g, &num, 1e-8) < 1e-4, "{kind:?} {rule:?}");
    }
}

#[test]
fn hardware_counts_table() {
    let count = |kind| hardware_counts(&HardwareTemplate::new(kind, 64, 8).unwrap());
    let hc = |rf_chains, phase_shifters, combiners, switches| HardwareCounts {
        rf_chains,
        antennas: 64,
        phase_shifters,
        combiners,
        switches,
    };
    assert_eq!(count(TemplateKind::Fdp), hc(64, 0, 0, 0));
    assert_eq!(count(TemplateKind::Fc), hc(8, 512, 64, 0));
    assert_eq!(count(TemplateKind::Fsa), hc(8, 64, 0, 0));
    assert_eq!(count(TemplateKind::Dsa), hc(8, 64, 0, 64));
}

fn reference_dims() -> RmDims {
    RmDims { n_u: 4, n_rf: 8, n_t: 64 }
}

#[test]
fn multiplication_counts() {
    let rm = |m| rm_complexity(m, reference_dims(), RmArch::default()).unwrap();
    assert_eq!(rm(RmMethod::OFdp), 7_270_400.0);
    assert_eq!(rm(RmMethod::PeAltMin), 7_700_480.0);
    assert_eq!(rm(RmMethod::MoAltMin), 38_744_064.0);
    assert_eq!(rm(RmMethod::EFdpNet), 4_694_016.0);
    assert_eq!(rm(RmMethod::EHbfNet), 5_218_304.0);
}

#[test]
fn multiplication_counts_match_table_to_three_figures() {
    let three = |x: f64| {
        let e = 10f64.powi(x.log10().floor() as i32 - 2);
        (x / e).round() * e
    };
    let rm = |m| rm_complexity(m, reference_dims(), RmArch::default()).unwrap();
    assert_eq!(three(rm(RmMethod::OFdp)), 7.27e6);
    assert_eq!(three(rm(RmMethod::MoAltMin)), 38.7e6);
    assert_eq!(three(rm(RmMethod::EFdpNet)), 4.69e6);
    // the table prints 5.21; the count rounds to 5.22 and truncates to 5.21
    assert!((rm(RmMethod::EHbfNet) / 1e6 - 5.21).abs() < 0.01);
}

#[test]
fn o_fdp_oracle_for_other_dims() {
    for (u, t) in [(1u64, 8u64), (2, 16), (3, 7), (5, 33)] {
        let d = RmDims { n_u: u, n_rf: 2, n_t: t };
        let (uf, tf) = (u as f64, t as f64);
        let oracle = 4.0 * (2f64.powi(u as i32) - 1.0) * (2.0 * uf * tf * tf + uf * uf * tf + tf.powi(3) / 3.0);
        let got = rm_complexity(RmMethod::OFdp, d, RmArch::default()).unwrap();
        assert!(rel(got, oracle) < 1e-12, "{u} {t}: {got} vs {oracle}");
    }
}

#[test]
fn unknown_method_is_a_contract_error() {
    assert!(matches!("SVD-Net".parse::<RmMethod>(), Err(CoreError::Contract(_))));
    assert_eq!("e_hbf_net".parse::<RmMethod>().unwrap(), RmMethod::EHbfNet);
}
