use nalgebra::DMatrix;
use proptest::prelude::*;
use switchreach::catalog;
use switchreach::linalg::min_eigenvalue;
use switchreach::riccati::*;
use switchreach::TimeGrid;

fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, steps).unwrap()
}

fn schedule() -> Vec<TerminalIndex> {
    [1.0, 2.0, 4.0, 8.0, 16.0].into_iter().map(TerminalIndex::Finite).collect()
}

fn convergence(sys: &switchreach::SwitchedSystem, steps: usize, n: f64, ms: &[TerminalIndex]) -> ConvergenceReport {
    let finite: Vec<RiccatiSolution> = ms.iter().map(|&m| solve_iterated(sys, grid(steps), n, m).unwrap()).collect();
    let inf = solve_iterated(sys, grid(steps), n, TerminalIndex::Infinite).unwrap();
    let refs: Vec<&RiccatiSolution> = finite.iter().collect();
    check_convergence(&refs, &inf)
}

#[test]
fn example_four_root_is_the_closed_form() {
    let sys = catalog::example4(12);
    let ric = solve_iterated(&sys, grid(2000), 4.0, TerminalIndex::Infinite).unwrap();
    for (i, t) in ric.grid().nodes().enumerate() {
        let mut exact = DMatrix::zeros(2, 2);
        exact[(1, 1)] = 4.0 * (1.0 - t);
        assert!((ric.sigma_field().node(0, i) - exact).amax() <= 1e-8, "t = {t}");
        assert!(ric.theta(0, t, 1).amax() <= 1e-7);
    }
}

#[test]
fn example_four_schedule_is_monotone() {
    let sys = catalog::example4(8);
    let rep = convergence(&sys, 500, 4.0, &schedule());
    assert!(rep.monotone && rep.gaps_decreasing, "{rep:?}");
    // Sigma^M - Sigma^inf has terminal value I / M, propagated by a
    // contraction on the uncontrolled coordinate.
    let last = *rep.gaps.last().unwrap();
    assert!(last <= (2.0f64).exp() / 16.0, "{last}");
    assert!(last >= 1.0 / 16.0 - 1e-12);
}

#[test]
fn zero_system_gap_is_the_terminal_inverse() {
    let sys = catalog::zero_system(2, 1, 3, 1.0);
    let rep = convergence(&sys, 50, 3.0, &schedule());
    for (g, m) in rep.gaps.iter().zip([1.0, 2.0, 4.0, 8.0, 16.0]) {
        assert!((g - 1.0 / m).abs() <= 1e-14, "{g} vs {}", 1.0 / m);
    }
    assert!((rep.worst_order_margin - 1.0 / 16.0).abs() <= 1e-14);
}

#[test]
fn schedule_order_does_not_matter() {
    let sys = catalog::random_bounded(3, 3);
    let forward = convergence(&sys, 200, 2.0, &schedule());
    let mut reversed_ms = schedule();
    reversed_ms.reverse();
    let reversed = convergence(&sys, 200, 2.0, &reversed_ms);
    assert_eq!(forward.schedule, reversed.schedule);
    assert_eq!(forward.gaps, reversed.gaps);
    assert_eq!(forward.monotone, reversed.monotone);
    assert_eq!(forward.gaps_decreasing, reversed.gaps_decreasing);
}

#[test]
fn zero_system_cm_is_the_terminal_inverse() {
    let sys = catalog::zero_system(2, 1, 3, 0.0);
    let cm = lower_bound_cm(&sys, 1.0, TerminalIndex::Finite(2.0)).unwrap();
    assert!((cm - 0.5).abs() <= 1e-15);
    let ric = solve_iterated(&sys, grid(50), 1.0, TerminalIndex::Finite(2.0)).unwrap();
    assert_eq!(ric.diagnostics.min_cm_margin, Some(0.0));
}

#[test]
fn terminal_index_json() {
    let ms: Vec<TerminalIndex> = serde_json::from_str(r#"[1, 2.5, "inf"]"#).unwrap();
    assert_eq!(ms, [TerminalIndex::Finite(1.0), TerminalIndex::Finite(2.5), TerminalIndex::Infinite]);
    assert_eq!(serde_json::to_string(&ms).unwrap(), r#"[1.0,2.5,"inf"]"#);
    assert!(serde_json::from_str::<TerminalIndex>("0").is_err());
    assert!(serde_json::from_str::<TerminalIndex>(r#""infinity""#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solutions_are_symmetric_psd_and_bounded(seed in 0u64..1000, n in 0.5f64..20.0, m in 0.5f64..20.0) {
        let sys = catalog::random_bounded(seed, 2);
        let ric = solve_iterated(&sys, grid(200), n, TerminalIndex::Finite(m)).unwrap();
        let d = &ric.diagnostics;
        prop_assert!(d.max_asymmetry <= 1e-12);
        prop_assert!(d.min_eigenvalue >= -1e-12);
        prop_assert!(d.min_lyapunov_margin >= -1e-10);
        prop_assert!(d.min_cm_margin.unwrap() >= -1e-10);
        prop_assert!(d.min_jump_eigenvalue >= 1.0 - 1e-12);
        prop_assert!(d.terminal_exact);
    }

    #[test]
    fn larger_m_gives_smaller_sigma(seed in 0u64..1000, m in 0.5f64..10.0, factor in 1.0f64..8.0) {
        let sys = catalog::random_bounded(seed, 2);
        let small = solve_iterated(&sys, grid(200), 3.0, TerminalIndex::Finite(m)).unwrap();
        let large = solve_iterated(&sys, grid(200), 3.0, TerminalIndex::Finite(m * factor)).unwrap();
        for h in 0..small.index().len() {
            for i in 0..small.grid().len() {
                let d = small.sigma_field().node(h, i) - large.sigma_field().node(h, i);
                prop_assert!(min_eigenvalue(&d) >= -1e-10);
            }
        }
    }
}
