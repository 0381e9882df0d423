use proptest::prelude::*;
use switchreach::bsde::{martingale_representation, solve_eta_zeta};
use switchreach::catalog;
use switchreach::riccati::{solve_iterated, TerminalIndex};
use switchreach::target::{Atom, CountOp, Term};
use switchreach::{TargetSpec, TimeGrid};

fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, steps).unwrap()
}

fn mixed(a: f64, b: f64, c: f64) -> TargetSpec {
    TargetSpec {
        terms: vec![
            Term { coef: vec![a, 0.5 * a], atom: Atom::Parity },
            Term { coef: vec![0.0, b], atom: Atom::JumpCount { op: CountOp::Ge, k: 1 } },
            Term { coef: vec![c, -c], atom: Atom::Constant },
        ],
    }
}

#[test]
fn zero_target_gives_zero_eta() {
    let sys = catalog::random_bounded(2, 3);
    let ric = solve_iterated(&sys, grid(100), 5.0, TerminalIndex::Infinite).unwrap();
    let sol = solve_eta_zeta(&sys, &ric, &TargetSpec::zero()).unwrap();
    for h in 0..ric.index().len() {
        assert_eq!(sol.first(h, 0.4, 0.0).amax(), 0.0);
    }
    assert_eq!(sol.second(0, 0.4, 0.4, 1).unwrap().amax(), 0.0);
}

#[test]
fn eta_of_a_deterministic_target_on_the_fourth_example() {
    // Away from the jump cap eta is -exp(t - T) on the uncontrolled coordinate.
    let sys = catalog::example4(12);
    let ric = solve_iterated(&sys, grid(400), 5.0, TerminalIndex::Infinite).unwrap();
    let sol = solve_eta_zeta(&sys, &ric, &TargetSpec::constant(&[1.0, 0.0])).unwrap();
    for t in [0.0, 0.3, 0.9] {
        let eta = sol.first(0, t, 0.0);
        assert!((eta[0] + (t - 1.0f64).exp()).abs() <= 1e-9, "{t}: {eta}");
        assert!(sol.second(0, t, t, 1).unwrap().amax() <= 1e-8);
        assert!(eta[1].abs() <= 1e-12);
    }
}

#[test]
fn zeta_of_the_first_jump_target_on_the_fourth_example() {
    let sys = catalog::example4(12);
    let ric = solve_iterated(&sys, grid(400), 5.0, TerminalIndex::Infinite).unwrap();
    let sol = solve_eta_zeta(&sys, &ric, &TargetSpec::first_jump_indicator(&[1.0, 0.0])).unwrap();
    for t in [0.0, 0.25, 0.6, 0.9] {
        let zeta = sol.second(0, t, t, 1).unwrap();
        assert!((zeta[0] + (2.0 * (t - 1.0f64)).exp()).abs() <= 1e-8, "{t}: {zeta}");
        assert!(zeta[1].abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn eta_is_linear_in_the_target(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, s in -3.0f64..3.0) {
        let sys = catalog::random_bounded(9, 3);
        let ric = solve_iterated(&sys, grid(100), 2.0, TerminalIndex::Infinite).unwrap();
        let xi = mixed(a, b, c);
        let one = solve_eta_zeta(&sys, &ric, &xi).unwrap();
        let scaled = solve_eta_zeta(&sys, &ric, &xi.scaled(s)).unwrap();
        for h in 0..ric.index().len() {
            let d = scaled.first(h, 0.5, 0.0) - one.first(h, 0.5, 0.0) * s;
            prop_assert!(d.amax() <= 1e-11 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn mean_is_additive(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let sys = catalog::example3(5);
        let (m1, _) = martingale_representation(&sys, &mixed(a, 0.0, 0.0), grid(100)).unwrap();
        let (m2, _) = martingale_representation(&sys, &mixed(0.0, b, c), grid(100)).unwrap();
        let (m, _) = martingale_representation(&sys, &mixed(a, b, c), grid(100)).unwrap();
        prop_assert!((m - m1 - m2).amax() <= 1e-12);
    }
}
