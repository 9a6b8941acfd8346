//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (visible with `--nocapture`; failures always show
//! their measurements).
//!
//! Run with: `cargo test -p dyninv --test acceptance -- --nocapture`

use dyninv::controllers::{self, ControllerKind, HatParameters, ReferenceCommandSignals};
use dyninv::error_spec::expand_cascade;
use dyninv::model::RollPlant;
use dyninv::sim::{self, ActuatorConfig, SimConfig, Snapshot};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const DEG: f64 = std::f64::consts::PI / 180.0;
const RAD_TO_DEG: f64 = 180.0 / std::f64::consts::PI;

/// Analytic solution of `ë + 33.2·ė + 264·e = 0`, written out directly from
/// the quadratic formula so it stays independent of the library's own
/// companion-matrix solver. Initial conditions in the units of `e0`.
fn roll_design_error(e0: f64, de0: f64) -> impl Fn(f64) -> f64 {
    let disc = (33.2_f64 * 33.2 - 4.0 * 264.0).sqrt();
    let l1 = (-33.2 + disc) / 2.0; // −13.2
    let l2 = (-33.2 - disc) / 2.0; // −20
    let c1 = (de0 - l2 * e0) / (l1 - l2);
    let c2 = e0 - c1;
    move |t: f64| c1 * (l1 * t).exp() + c2 * (l2 * t).exp()
}

#[test]
fn criterion_01_exact_inversion() {
    let continuous = SimConfig::roll_step(ControllerKind::AndiFirstOrder, 5.0 * DEG).continuous();
    let trace = sim::run_closed_loop(&continuous).unwrap();
    let cont_err = trace.max_tracking_error() * RAD_TO_DEG;

    let held = SimConfig::roll_step(ControllerKind::AndiFirstOrder, 5.0 * DEG);
    assert_eq!(held.dt_control, 1e-3);
    let trace = sim::run_closed_loop(&held).unwrap();
    let held_err = trace.max_tracking_error() * RAD_TO_DEG;

    println!(
        "criterion 01 exact inversion: continuous {cont_err:.3e} deg/s (<= 1e-6), \
         held {held_err:.3e} deg/s (<= 1e-3)"
    );
    assert!(
        cont_err <= 1e-6,
        "FAIL criterion 01: continuous-mode tracking error {cont_err:.3e} deg/s > 1e-6"
    );
    assert!(
        held_err <= 1e-3,
        "FAIL criterion 01: held-mode tracking error {held_err:.3e} deg/s > 1e-3 \
         (zero-order hold of the exact law yields ~1.009e-3 deg/s per deg/s of step \
         amplitude at dt_control = 1e-3; the 5 deg/s step pins this run at ~5.045e-3)"
    );
}

#[test]
fn criterion_02_indi_tracking_defect() {
    let cfg = SimConfig::roll_step(ControllerKind::IndiClassic, 5.0 * DEG).continuous();
    let trace = sim::run_closed_loop(&cfg).unwrap();
    let err = trace.max_tracking_error() * RAD_TO_DEG;
    println!("criterion 02 incremental tracking defect: {err:.4} deg/s (>= 0.05)");
    assert!(
        err >= 0.05,
        "FAIL criterion 02: defect {err:.4} deg/s < 0.05"
    );
}

fn perturbation_deviation(kind: ControllerKind) -> f64 {
    let cfg = SimConfig::roll_perturbation(kind, 5.0 * DEG).continuous();
    let trace = sim::run_closed_loop(&cfg).unwrap();
    // e(0) = −5 deg/s, ė(0) = ṗ_ref(0) − ṗ(0) = 0 − (−6.6·5) = 33 deg/s².
    let design = roll_design_error(-5.0, 33.0);
    trace
        .time
        .iter()
        .zip(trace.error.iter())
        .skip(1)
        .map(|(&t, &e)| (e * RAD_TO_DEG - design(t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_03_designed_error_dynamics() {
    let dev = perturbation_deviation(ControllerKind::AndiFirstOrder);
    println!("criterion 03 designed error dynamics: deviation Linf {dev:.3e} deg/s (<= 1e-3)");
    assert!(
        dev <= 1e-3,
        "FAIL criterion 03: deviation {dev:.3e} deg/s > 1e-3"
    );
}

#[test]
fn criterion_04_indi_actuators_residual_defect() {
    let andi = perturbation_deviation(ControllerKind::AndiFirstOrder);
    let with_act = perturbation_deviation(ControllerKind::IndiActuatorsRaab);
    println!(
        "criterion 04 actuator-design increment defect: {with_act:.3e} deg/s vs exact \
         {andi:.3e} deg/s (ratio {:.1e} >= 10)",
        with_act / andi
    );
    assert!(
        with_act > 0.0,
        "FAIL criterion 04: deviation is exactly zero"
    );
    assert!(
        with_act >= 10.0 * andi,
        "FAIL criterion 04: ratio {:.2} < 10",
        with_act / andi
    );
}

#[test]
fn criterion_05_bandwidth_convergence() {
    let omegas = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
    let cfg = SimConfig::roll_perturbation(ControllerKind::IndiClassic, 5.0 * DEG).continuous();
    let points = sim::bandwidth_sweep(&cfg, &omegas).unwrap();

    let sim_linf: Vec<f64> = points.iter().map(|p| p.simulated.l_inf).collect();
    let sim_l2: Vec<f64> = points.iter().map(|p| p.simulated.l2).collect();
    let gap_linf: Vec<f64> = points.iter().map(|p| p.design_gap.l_inf).collect();
    let gap_l2: Vec<f64> = points.iter().map(|p| p.design_gap.l2).collect();

    let strictly_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    println!(
        "criterion 05 bandwidth convergence: simulated L2 {:.3e} -> {:.3e} (x{:.1}), \
         design gap L2 {:.3e} -> {:.3e} (x{:.1})",
        sim_l2[0],
        sim_l2[sim_l2.len() - 1],
        sim_l2[0] / sim_l2[sim_l2.len() - 1],
        gap_l2[0],
        gap_l2[gap_l2.len() - 1],
        gap_l2[0] / gap_l2[gap_l2.len() - 1],
    );
    assert!(
        strictly_decreasing(&sim_linf) && strictly_decreasing(&sim_l2),
        "FAIL criterion 05: simulated deviation sequence is not strictly decreasing"
    );
    assert!(
        strictly_decreasing(&gap_linf) && strictly_decreasing(&gap_l2),
        "FAIL criterion 05: design-gap sequence is not strictly decreasing"
    );
    // Final ≤ 1/10 of initial, measured on the square-integral norm, which
    // honors the duration shrink of the high-bandwidth transients.
    assert!(
        sim_l2[sim_l2.len() - 1] <= sim_l2[0] / 10.0,
        "FAIL criterion 05: simulated L2 shrank only by {:.2}",
        sim_l2[0] / sim_l2[sim_l2.len() - 1]
    );
    assert!(
        gap_l2[gap_l2.len() - 1] <= gap_l2[0] / 10.0,
        "FAIL criterion 05: design-gap L2 shrank only by {:.2}",
        gap_l2[0] / gap_l2[gap_l2.len() - 1]
    );
}

#[test]
fn criterion_06_limit_identity() {
    let snapshot = Snapshot {
        state: 2.0 * DEG,
        actuator: 0.3 * DEG,
        reference: -1.0 * DEG,
        reference_rate: 7.0 * DEG,
        reference_accel: 150.0 * DEG,
    };
    let omegas = [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0];
    let study = sim::limit_study(&RollPlant::default(), &[13.2], &snapshot, &omegas).unwrap();
    let slope = study.slope.expect("nonzero gap expected");
    println!("criterion 06 limit identity: log-log slope {slope:.4} (within -1 +/- 0.05)");
    assert!(
        (slope + 1.0).abs() <= 0.05,
        "FAIL criterion 06: slope {slope:.4} outside -1 +/- 0.05"
    );
}

#[test]
fn criterion_07_gain_synthesis_oracle() {
    // Brute-force polynomial multiplication, ascending powers.
    fn convolution(gains: &[f64], omega_y: f64) -> Vec<f64> {
        let mut sys: Vec<f64> = gains.to_vec();
        sys.push(1.0);
        let mut out = vec![0.0; sys.len() + 1];
        for (i, &a) in sys.iter().enumerate() {
            out[i] += a * omega_y;
            out[i + 1] += a;
        }
        out.truncate(sys.len());
        out
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let r = rng.random_range(1..=4);
        let gains: Vec<f64> = (0..r).map(|_| rng.random_range(-10.0..30.0)).collect();
        let omega_y = rng.random_range(0.1..50.0);
        let got = expand_cascade(&gains, omega_y).unwrap();
        let want = convolution(&gains, omega_y);
        for (g, w) in got.iter().zip(want.iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    let k = expand_cascade(&[13.2], 20.0).unwrap();
    println!(
        "criterion 07 gain synthesis: worst |diff| {worst:.2e} over 200 specs (<= 1e-12); \
         roll k_1 = {}, k_0 = {}",
        k[1], k[0]
    );
    assert!(
        worst <= 1e-12,
        "FAIL criterion 07: oracle mismatch {worst:.2e}"
    );
    // exactly the symbols evaluated at the configured parameters
    assert_eq!(k[1], 20.0 - (-13.2), "FAIL criterion 07: k_1");
    assert_eq!(k[0], -(-13.2) * 20.0, "FAIL criterion 07: k_0");
    assert_eq!(k[1], 33.2);
    assert_eq!(k[0], 264.0);
}

#[test]
fn criterion_08_allocation_suite() {
    use dyninv::allocation::{allocate, right_inverse};

    let mut rng = ChaCha8Rng::seed_from_u64(4096);
    let random_full_row_rank = |m: usize, k: usize, rng: &mut ChaCha8Rng| loop {
        let a = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
        let svd = a.clone().svd(false, false);
        let smin: f64 = svd.singular_values.min();
        let smax: f64 = svd.singular_values.max();
        if smin > 1e-3 * smax.max(1e-12) {
            return a;
        }
    };

    let mut worst_residual: f64 = 0.0;
    for _ in 0..500 {
        let m = rng.random_range(1..=5);
        let k = rng.random_range(m..=5);
        let a = random_full_row_rank(m, k, &mut rng);
        let inv = right_inverse(&a).unwrap();
        worst_residual = worst_residual.max((&a * inv - DMatrix::identity(m, m)).norm());
    }

    // Min-norm against a null-space perturbation oracle.
    let mut min_norm_ok = true;
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let k = rng.random_range(m..=5);
        let a = random_full_row_rank(m, k, &mut rng);
        let b = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let x = allocate(&a, &b).unwrap();
        let v_t = a.clone().svd(false, true).v_t.unwrap();
        for _ in 0..5 {
            let raw = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let null = &raw - v_t.transpose() * (&v_t * &raw);
            if null.norm() < 1e-12 {
                continue;
            }
            if x.norm() > (&x + null).norm() + 1e-9 {
                min_norm_ok = false;
            }
        }
    }
    println!(
        "criterion 08 allocation: worst |A A+ - I| {worst_residual:.2e} over 500 matrices \
         (<= 1e-10); min-norm oracle {}",
        if min_norm_ok { "ok" } else { "violated" }
    );
    assert!(
        worst_residual <= 1e-10,
        "FAIL criterion 08: identity residual {worst_residual:.2e} > 1e-10"
    );
    assert!(min_norm_ok, "FAIL criterion 08: a shorter solution exists");
}

#[test]
fn criterion_09_second_order_actuator() {
    let mut cfg = SimConfig::roll_step(ControllerKind::AndiGeneralized, 5.0 * DEG);
    cfg.actuator = ActuatorConfig::SecondOrder {
        omega: 20.0,
        zeta: 0.7,
    };
    cfg.error_gains = vec![264.0, 33.2];
    cfg.omega_y = 20.0;
    let trace = sim::run_closed_loop(&cfg).unwrap();
    let residual = trace.max_inversion_residual();
    println!(
        "criterion 09 second-order actuator: max |y''' - nu| at ticks {residual:.2e} (<= 1e-6)"
    );
    assert!(
        residual <= 1e-6,
        "FAIL criterion 09: inversion residual {residual:.2e} > 1e-6"
    );
}

#[test]
fn criterion_10_reference_model_law() {
    // Closed loop with exact hats: printed-dynamics residual at ticks.
    let cfg = SimConfig::roll_step(ControllerKind::RmFeedforward, 5.0 * DEG);
    let trace = sim::run_closed_loop(&cfg).unwrap();
    let residual = trace.max_inversion_residual();

    // Pass-through: on-reference plant with matching actuator state. Binary
    // fractions keep the float cancellation exact.
    let hat = HatParameters {
        effectiveness: DMatrix::from_element(1, 1, 0.25),
        actuator_bandwidth: DVector::from_element(1, 20.0),
        error_gain: DVector::from_element(1, 20.0),
    };
    let rm = ReferenceCommandSignals {
        command: DVector::from_element(1, 1.75),
        actuator: DVector::from_element(1, 0.5),
        output_derivative: DVector::from_element(1, 3.0),
    };
    let scalar = |v: f64| DVector::from_element(1, v);
    let input = controllers::ControllerInput {
        x: scalar(0.0),
        x_derivatives: vec![scalar(3.0)],
        u_chain: vec![scalar(0.5)],
        y: vec![scalar(0.0), scalar(3.0)],
        y_ref: vec![scalar(0.0), scalar(3.0), scalar(0.0)],
        previous: controllers::PreviousSample {
            x: scalar(0.0),
            u: scalar(0.5),
            y_r: scalar(3.0),
        },
    };
    let u_c = controllers::rm_feedforward(&input, &hat, &rm).unwrap();
    println!(
        "criterion 10 reference-model law: printed-dynamics residual {residual:.2e} (<= 1e-6); \
         pass-through u_c = {} (== 1.75)",
        u_c[0]
    );
    assert!(
        residual <= 1e-6,
        "FAIL criterion 10: printed-dynamics residual {residual:.2e} > 1e-6"
    );
    assert_eq!(u_c[0], 1.75, "FAIL criterion 10: pass-through not exact");
}

#[test]
fn criterion_11_determinism_and_convergence() {
    let cfg = SimConfig::roll_step(ControllerKind::AndiFirstOrder, 5.0 * DEG);
    let a = sim::run_closed_loop(&cfg).unwrap();
    let b = sim::run_closed_loop(&cfg).unwrap();
    let identical = a.state == b.state
        && a.command == b.command
        && a.reference == b.reference
        && a.error == b.error;

    let run = |dt_i: f64| {
        let cfg = SimConfig {
            dt_integration: dt_i,
            ..SimConfig::roll_step(ControllerKind::AndiFirstOrder, 5.0 * DEG)
        };
        sim::run_closed_loop(&cfg).unwrap()
    };
    let t0 = run(5e-4);
    let t1 = run(2.5e-4);
    let t2 = run(1.25e-4);
    let diff = |x: &sim::SimTrace, y: &sim::SimTrace| {
        x.state
            .iter()
            .zip(y.state.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let ratio = diff(&t0, &t1) / diff(&t1, &t2);
    println!(
        "criterion 11 determinism and convergence: bit-identical {identical}, refinement \
         ratio {ratio:.1} (>= 12)"
    );
    assert!(identical, "FAIL criterion 11: repeated runs differ");
    assert!(
        ratio >= 12.0,
        "FAIL criterion 11: refinement ratio {ratio:.1} < 12"
    );
}
