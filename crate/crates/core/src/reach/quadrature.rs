//! Deterministic evaluation of `E int_0^T int_E g q^(dt, dtheta)`.
//!
//! Jump-time-free integrands are handled by the backward Kolmogorov system
//! on the history tree. Integrands that also depend on the first jump time
//! are integrated over `T1` with composite Gauss–Legendre rules, each node
//! conditioning on the first jump and solving the remaining tree backward.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bsde::{LinearBsdeSpec, Solved};
use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::ode::Rk4;
use crate::structure::{HistoryField, HistoryIndex, TimeGrid};

pub const GL_ORDER: usize = 32;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule with `panels` equal panels.
pub fn composite_gl<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let (x, w) = gauss_legendre(GL_ORDER);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * 0.5 * width * f(mid + 0.5 * width * xi);
        }
    }
    total
}

/// `out[k]` = running density of component `k` at `(h, t)`, already summed
/// over marks with the compensator weights.
pub type Source<'a> = dyn Fn(usize, f64, &mut [f64]) + Sync + 'a;
/// `(mark, t, out)` = continuation value; `false` when there is none.
pub type Continuation<'a> = dyn Fn(usize, f64, &mut [f64]) -> bool + Sync + 'a;

/// Backward solve of `du/dt = -s(h, t) - sum_theta r (u(child) - u(h))`,
/// `u(T) = 0`, for one history.
fn solve_one(
    sys: &SwitchedSystem,
    index: &HistoryIndex,
    grid: &TimeGrid,
    h: usize,
    m: usize,
    source: &Source<'_>,
    child: &Continuation<'_>,
) -> (Vec<f64>, Vec<f64>) {
    let len = grid.len();
    let mut values = vec![0.0; len * m];
    let mut slopes = vec![0.0; len * m];
    let seq = index.seq(h);
    let mut next = vec![0.0; m];
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        source(h, t, dy);
        for v in dy.iter_mut() {
            *v = -*v;
        }
        for (mark, r) in sys.history_compensator(seq, t).into_iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            if !child(mark, t, &mut next) {
                next.fill(0.0);
            }
            for k in 0..m {
                dy[k] -= r * (next[k] - y[k]);
            }
        }
    };
    let mut y = vec![0.0; m];
    let mut rk = Rk4::new(m);
    for i in (0..len - 1).rev() {
        let slope = rk.step(grid.node(i + 1), -grid.h(), &mut y, &mut rhs);
        slopes[(i + 1) * m..(i + 2) * m].copy_from_slice(slope);
        values[i * m..(i + 1) * m].copy_from_slice(&y);
    }
    let mut dy = vec![0.0; m];
    rhs(grid.node(0), &y, &mut dy);
    slopes[..m].copy_from_slice(&dy);
    (values, slopes)
}

/// Conditional expectations of the running sources on levels
/// `lowest..=J`, as an `m`-vector field with slopes.
pub fn backward_expectation(
    sys: &SwitchedSystem,
    index: &HistoryIndex,
    grid: TimeGrid,
    m: usize,
    lowest: usize,
    source: &Source<'_>,
) -> HistoryField {
    let mut field = HistoryField::zeros(grid, index.len(), m, 1).with_slopes();
    for level in (lowest..=index.max_jumps()).rev() {
        let ids = index.level_ids(level).to_vec();
        let f = &field;
        let solved: Vec<(Vec<f64>, Vec<f64>)> = ids
            .par_iter()
            .map(|&h| {
                let child = |mark: usize, t: f64, out: &mut [f64]| match index.child(h, mark) {
                    Some(c) => {
                        f.eval_smooth_into(c, t, out);
                        true
                    }
                    None => false,
                };
                solve_one(sys, index, &grid, h, m, source, &child)
            })
            .collect();
        for (&h, (v, s)) in ids.iter().zip(solved) {
            let (fv, fs) = field.history_parts_mut(h);
            fv.copy_from_slice(&v);
            fs.expect("slopes").copy_from_slice(&s);
        }
    }
    field
}

/// How the integrand depends on the path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureMode {
    /// Depends on the visited modes and on `t` only.
    History,
    /// May also depend on the first jump time; `panels` Gauss–Legendre
    /// panels on `[0, T]`.
    FirstJump { panels: usize },
}

/// `E int_0^T sum_theta r(h, t, theta) g(h, t, t1, theta) dt`, where
/// `g(h, t, t1, theta)` receives the first jump time `t1` (equal to `t` on
/// the no-jump history).
pub fn expectation_quadrature(
    sys: &SwitchedSystem,
    grid: TimeGrid,
    integrand: &(dyn Fn(usize, f64, f64, usize) -> f64 + Sync),
    mode: QuadratureMode,
) -> Result<f64> {
    let index = HistoryIndex::new(sys);
    let weighted = |h: usize, t: f64, t1: f64| -> f64 {
        sys.history_compensator(index.seq(h), t)
            .iter()
            .enumerate()
            .filter(|(_, r)| **r != 0.0)
            .map(|(mark, r)| r * integrand(h, t, t1, mark))
            .sum()
    };
    match mode {
        QuadratureMode::History => {
            let source = |h: usize, t: f64, out: &mut [f64]| out[0] = weighted(h, t, t);
            let field = backward_expectation(sys, &index, grid, 1, 0, &source);
            Ok(field.node_slice(0, 0)[0])
        }
        QuadratureMode::FirstJump { panels } => {
            if panels == 0 {
                return Err(Error::Config("at least one quadrature panel is required".into()));
            }
            let horizon = sys.horizon();
            let g0 = sys.initial_mode();
            let survival = |t: f64| (-sys.intensity().cumulative(g0, 0.0, t)).exp();
            let root = composite_gl(0.0, horizon, panels, |t| survival(t) * weighted(0, t, t));
            let (x, w) = gauss_legendre(GL_ORDER);
            let width = horizon / panels as f64;
            let nodes: Vec<(f64, f64)> = (0..panels)
                .flat_map(|p| {
                    let mid = (p as f64 + 0.5) * width;
                    x.iter().zip(&w).map(move |(xi, wi)| (mid + 0.5 * width * xi, 0.5 * width * wi)).collect::<Vec<_>>()
                })
                .collect();
            let after: Vec<f64> = nodes
                .par_iter()
                .map(|&(t1, wt)| {
                    let steps = ((horizon - t1) / grid.h()).ceil().max(1.0) as usize;
                    let sub = TimeGrid::new(t1, horizon, steps).expect("non-degenerate sub-grid");
                    let source = |h: usize, t: f64, out: &mut [f64]| out[0] = weighted(h, t, t1);
                    let field = backward_expectation(sys, &index, sub, 1, 1, &source);
                    let rates = sys.history_compensator(index.seq(0), t1);
                    let mut acc = 0.0;
                    for (mark, r) in rates.iter().enumerate() {
                        if let (Some(c), true) = (index.child(0, mark), *r != 0.0) {
                            acc += r * field.node_slice(c, 0)[0];
                        }
                    }
                    wt * survival(t1) * acc
                })
                .collect();
            Ok(root + after.iter().sum::<f64>())
        }
    }
}

/// `E int sum_theta r <W zeta, zeta> dt` for the second component `zeta`
/// of a solved backward equation, with `W(h, t, theta)` symmetric.
pub fn quadratic_functional<S: LinearBsdeSpec>(
    solved: &Solved<S>,
    weight: &(dyn Fn(usize, f64, usize) -> DMatrix<f64> + Sync),
) -> Result<f64> {
    let sol = &solved.solution;
    let spec = &solved.spec;
    let sys = spec.system();
    let index = sol.index();
    let grid = *sol.grid();
    let comps = sol.component_count();
    let pairs: Vec<(usize, usize)> = (0..comps).flat_map(|a| (a..comps).map(move |b| (a, b))).collect();
    let failure = std::sync::Mutex::new(None::<Error>);
    let record = |e: Error| {
        failure.lock().unwrap().get_or_insert(e);
    };

    let pair_source = |h: usize, t: f64, out: &mut [f64]| {
        out.fill(0.0);
        for (mark, r) in sys.history_compensator(index.seq(h), t).into_iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let zs: Vec<DVector<f64>> = match (0..comps).map(|c| sol.component_second(spec, c, h, t, mark)).collect() {
                Ok(z) => z,
                Err(e) => return record(e),
            };
            let w = weight(h, t, mark);
            for (k, &(a, b)) in pairs.iter().enumerate() {
                let v = (&w * &zs[a]).dot(&zs[b]);
                out[k] += r * if a == b { v } else { 2.0 * v };
            }
        }
    };
    let upper = backward_expectation(sys, index, grid, pairs.len(), 1, &pair_source);

    let root = index.level_ids(0)[0];
    let root_source = |_h: usize, t: f64, out: &mut [f64]| {
        out[0] = 0.0;
        for (mark, r) in sys.history_compensator(index.seq(root), t).into_iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            match sol.second(spec, root, t, t, mark) {
                Ok(z) => out[0] += r * (&weight(root, t, mark) * &z).dot(&z),
                Err(e) => record(e),
            }
        }
    };
    let child = |mark: usize, t: f64, out: &mut [f64]| match index.child(root, mark) {
        Some(c) => {
            let mut tmp = vec![0.0; pairs.len()];
            upper.eval_smooth_into(c, t, &mut tmp);
            out[0] = pairs
                .iter()
                .zip(&tmp)
                .map(|(&(a, b), u)| sol.component_weight(a, t) * sol.component_weight(b, t) * u)
                .sum();
            true
        }
        None => false,
    };
    let (values, _) = solve_one(sys, index, &grid, root, 1, &root_source, &child);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(values[0])
}
