use proptest::prelude::*;
use switchreach::bsde::martingale_representation;
use switchreach::catalog;
use switchreach::reach::quadrature::{composite_gl, quadratic_functional};
use switchreach::reach::value::{target_moments, Verdict};
use switchreach::reach::*;
use switchreach::riccati::TerminalIndex;
use switchreach::target::TargetSpec;
use switchreach::TimeGrid;

fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, steps).unwrap()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[test]
fn expected_jump_count_is_truncated_poisson_mean() {
    for j in [1, 3, 8] {
        let sys = catalog::example4(j);
        let v = expectation_quadrature(&sys, grid(1000), &|_, _, _, _| 1.0, QuadratureMode::History).unwrap();
        let oracle: f64 = (0..40).map(|k| k.min(j) as f64 * (-1f64).exp() / factorial(k)).sum();
        assert!((v - oracle).abs() < 1e-6, "J={j}: {v} vs {oracle}");
    }
}

#[test]
fn first_jump_mode_agrees_with_history_mode() {
    let sys = catalog::example4(3);
    let f = |h: usize, t: f64, _t1: f64, _m: usize| (h as f64 + 1.0) * t.cos();
    let a = expectation_quadrature(&sys, grid(400), &f, QuadratureMode::History).unwrap();
    let b = expectation_quadrature(&sys, grid(400), &f, QuadratureMode::FirstJump { panels: 2 }).unwrap();
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
}

#[test]
fn first_jump_dependent_integrand() {
    // E[exp(T1) 1{N_T >= 2}] = int_0^1 e^{-s} e^{s} (1 - e^{-(1-s)}) ds = e^{-1}
    let sys = catalog::example4(2);
    let f = |h: usize, _t: f64, t1: f64, _m: usize| if h == 0 { 0.0 } else { t1.exp() };
    let v = expectation_quadrature(&sys, grid(400), &f, QuadratureMode::FirstJump { panels: 2 }).unwrap();
    assert!((v - (-1f64).exp()).abs() < 1e-8, "{v}");
}

#[test]
fn isometry_for_first_jump_indicator() {
    let sys = catalog::example4(6);
    let xi = TargetSpec::first_jump_indicator(&[1.0, 0.0]);
    let (mean, solved) = martingale_representation(&sys, &xi, grid(1000)).unwrap();
    let eye = nalgebra::DMatrix::<f64>::identity(2, 2);
    let var = quadratic_functional(&solved, &|_, _, _| eye.clone()).unwrap();
    let p = 1.0 - (-1f64).exp();
    assert!((mean[0] - p).abs() < 1e-8);
    assert!((var - p * (1.0 - p)).abs() < 1e-6, "{var}");
    let (_, second) = target_moments(&sys, grid(1000), &xi).unwrap();
    assert!((second - p).abs() < 1e-6);
}

#[test]
fn zero_target_has_zero_value() {
    let sys = catalog::example4(3);
    let v = value_vn(&sys, grid(200), 4.0, &TargetSpec::zero(), TerminalIndex::Infinite).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn uncontrolled_component_value() {
    // The first component sees no control: eta^1 = -e^{t-T} E[xi^1 | F_t] and
    // the value is int_0^1 e^{-t} e^{2(t-1)} e^{2(t-1)} dt = e^{-4}(e^3 - 1)/3.
    let sys = catalog::example4(12);
    let xi = TargetSpec::first_jump_indicator(&[1.0, 0.0]);
    let oracle = (-4f64).exp() * (3f64.exp() - 1.0) / 3.0;
    for n in [1.0, 100.0] {
        let v = value_vn(&sys, grid(1000), n, &xi, TerminalIndex::Infinite).unwrap();
        assert!((v - oracle).abs() < 1e-7, "N={n}: {v} vs {oracle}");
    }
    let p = 1.0 - (-1f64).exp();
    let var = p * (1.0 - p);
    assert!((-2f64).exp() * var <= oracle && oracle <= var);
}

#[test]
fn controlled_component_value_decays_in_n() {
    let sys = catalog::example4(12);
    let xi = TargetSpec::first_jump_indicator(&[0.0, 1.0]);
    let mut last = f64::INFINITY;
    for n in [1.0, 10.0, 100.0] {
        let v = value_vn(&sys, grid(1000), n, &xi, TerminalIndex::Infinite).unwrap();
        let oracle = composite_gl(0.0, 1.0, 8, |t| (-t).exp() * (2.0 * (t - 1.0)).exp() / (1.0 + n * (1.0 - t)));
        assert!((v - oracle).abs() < 1e-7, "N={n}: {v} vs {oracle}");
        assert!(v < last);
        last = v;
    }
}

#[test]
fn verdicts_on_example_four() {
    let sys = catalog::example4(8);
    let settings = VerdictSettings { epsilon: Some(0.01), ..VerdictSettings::new(grid(500)) };
    let r1 = reachability_verdict(&sys, &TargetSpec::first_jump_indicator(&[1.0, 0.0]), &settings).unwrap();
    assert_eq!(r1.verdict, Verdict::NotReachable);
    assert!(r1.certified_lower_bound >= 0.031);
    assert!(
        r1.checks.non_increasing_in_n && r1.checks.lower_bounds_below_value && r1.checks.lower_bounds_increasing_in_m
    );
    let r2 = reachability_verdict(&sys, &TargetSpec::first_jump_indicator(&[0.0, 1.0]), &settings).unwrap();
    assert_eq!(r2.verdict, Verdict::Reachable);
    let r3 = reachability_verdict(&sys, &TargetSpec::zero(), &VerdictSettings::new(grid(100))).unwrap();
    assert_eq!(r3.verdict, Verdict::Reachable);
    let mut csv = vec![];
    r2.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
}

#[test]
fn rejects_bad_schedule() {
    let sys = catalog::example4(2);
    let settings = VerdictSettings { n_schedule: vec![10.0, 1.0], ..VerdictSettings::new(grid(50)) };
    assert!(reachability_verdict(&sys, &TargetSpec::zero(), &settings).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn value_is_quadratic_in_the_target(seed in 0u64..1000, c in -3.0f64..3.0) {
        let sys = catalog::random_bounded(seed, 2);
        let xi = TargetSpec::first_jump_indicator(&[1.0, -0.5]).plus(&TargetSpec {
            terms: vec![switchreach::target::Term {
                coef: vec![0.3, 0.7],
                atom: switchreach::target::Atom::Parity,
            }],
        });
        let v = value_vn(&sys, grid(200), 3.0, &xi, TerminalIndex::Infinite).unwrap();
        let vc = value_vn(&sys, grid(200), 3.0, &xi.scaled(c), TerminalIndex::Infinite).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((vc - c * c * v).abs() <= 1e-8 * (1.0 + vc.abs()));
    }

    #[test]
    fn value_is_non_increasing_in_n(seed in 0u64..1000) {
        let sys = catalog::random_bounded(seed, 2);
        let xi = TargetSpec::first_jump_indicator(&[1.0, 1.0]);
        let mut last = f64::INFINITY;
        for n in [0.5, 2.0, 8.0] {
            let v = value_vn(&sys, grid(200), n, &xi, TerminalIndex::Infinite).unwrap();
            prop_assert!(v <= last + 1e-10);
            last = v;
        }
    }

    #[test]
    fn finite_m_bounds_stay_below_value(seed in 0u64..1000) {
        let sys = catalog::random_bounded(seed, 2);
        let xi = TargetSpec::first_jump_indicator(&[0.5, -1.0]);
        let v = value_vn(&sys, grid(200), 2.0, &xi, TerminalIndex::Infinite).unwrap();
        let mut last = 0.0;
        for m in [1.0, 4.0, 16.0] {
            let lb = value_vn(&sys, grid(200), 2.0, &xi, TerminalIndex::Finite(m)).unwrap();
            prop_assert!(lb <= v + 1e-9 * (1.0 + v));
            prop_assert!(lb >= last - 1e-9);
            last = lb;
        }
    }
}

fn small_verify(paths: usize) -> VerifySettings {
    VerifySettings { paths, seed: 4, mc_steps: 200, gap_paths: 200, gap_steps: 1000 }
}

#[test]
fn verify_zero_target() {
    let sys = catalog::example4(4);
    let r = verify(&sys, grid(200), 10.0, &TargetSpec::zero(), &small_verify(500)).unwrap();
    assert_eq!(r.value, 0.0);
    assert_eq!(r.mc.cost.mean, 0.0);
    assert!(r.agrees_within_3_std_errors);
    assert_eq!(r.terminal_gap.max, 0.0);
}

#[test]
fn deterministic_target_is_reached_without_control() {
    let sys = catalog::example4(4);
    let xi = TargetSpec::constant(&[0.0, 1.0]);
    let syn = synthesize(&sys, grid(400), 10.0, &xi).unwrap();
    assert!(syn.value(&sys).unwrap().abs() <= 1e-12);
    let r = verify(&sys, grid(400), 10.0, &xi, &small_verify(500)).unwrap();
    assert!(r.mc.control_energy.mean <= 1e-20);
    assert!(r.terminal_gap.max <= 1e-10);
}

#[test]
fn verify_on_the_planar_example() {
    let sys = catalog::example2(4);
    let xi = TargetSpec::first_jump_indicator(&[1.0, -0.5]).plus(&TargetSpec::constant(&[0.2, 0.3]));
    let r = verify(&sys, grid(500), 10.0, &xi, &small_verify(20_000)).unwrap();
    assert!(r.agrees_within_3_std_errors, "{r:?}");
    assert!(r.terminal_gap.max <= 1e-3);
}
