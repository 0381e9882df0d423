use nalgebra::DMatrix;
use switchreach::catalog;
use switchreach::riccati::{solve_iterated, TerminalIndex};
use switchreach::{HistoryIndex, ModeHistory, TimeGrid};

#[test]
fn sigma_readout_on_the_root_history() {
    let sys = catalog::example4(12);
    let ric = solve_iterated(&sys, TimeGrid::new(0.0, 1.0, 400).unwrap(), 10.0, TerminalIndex::Infinite).unwrap();
    let root = ModeHistory::root(0);
    for t in [0.0, 0.1234, 0.5, 0.999] {
        let s = ric.sigma_field().field_eval(ric.index(), &root, t).unwrap();
        let mut exact = DMatrix::zeros(2, 2);
        exact[(1, 1)] = 10.0 * (1.0 - t);
        assert!((s - exact).amax() <= 1e-8, "t = {t}");
    }
}

#[test]
fn truncation_error_grows_toward_the_cap() {
    let g = TimeGrid::new(0.0, 1.0, 400).unwrap();
    let short = solve_iterated(&catalog::example4(12), g, 4.0, TerminalIndex::Infinite).unwrap();
    let long = solve_iterated(&catalog::example4(16), g, 4.0, TerminalIndex::Infinite).unwrap();
    let (si, li) = (short.index(), long.index());
    let mut e = ModeHistory::root_timed(0);
    let mut previous = 0.0;
    for level in 0..=3 {
        let t = e.last_jump_time() + 0.005;
        let a = short.sigma_field().jump_difference(si, &e, t, 1 - e.last_mode()).unwrap();
        let b = long.sigma_field().jump_difference(li, &e, t, 1 - e.last_mode()).unwrap();
        let err = (&a - &b).amax();
        assert!(err <= 1e-5 && err >= previous, "level {level}: {err:e}");
        assert!(b.amax() <= 1e-8, "level {level}");
        previous = err;
        e = e.concat(t + 0.005, 1 - e.last_mode()).unwrap();
    }
}

#[test]
fn index_of_a_three_mode_system() {
    let sys = catalog::random_bounded(1, 2);
    let index = HistoryIndex::new(&sys);
    assert_eq!(index.len(), 1 + 2 + 4);
    for id in 0..index.len() {
        assert_eq!(index.id_of(index.seq(id)), Some(id));
        if let Some(p) = index.parent(id) {
            assert_eq!(index.child(p, *index.seq(id).last().unwrap()), Some(id));
        }
    }
}
