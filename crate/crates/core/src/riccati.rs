//! Iterated deterministic Riccati system.
//!
//! For a history `e` at level `j` the matrix `p = sigma_j(e, .)` solves
//!
//! ```text
//! dp/dt = p c p + a p + p a^T - b,        p(T) = M^{-1} I,
//! ```
//!
//! with `a`, `b`, `c` assembled from the system data and the already solved
//! next-level values `s_theta = sigma_{j+1}(e ⊕ theta, t)`:
//!
//! ```text
//! K = (I + s_theta)^{-1},  D = C(theta) + I,  r = lambda Q(theta)
//! a = A + lambda/2 I - sum r s_theta K D
//! b = N B B^T + sum r s_theta K
//! c = sum r D^T K D
//! ```
//!
//! The jump part of the stochastic Riccati pair is recovered as
//! `Theta(theta) = sigma_{j+1}(e ⊕ theta, t) - sigma_j(e, t)`.

use std::cell::RefCell;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, inv_identity_plus, loewner_le, max_eigenvalue, min_eigenvalue, spectral_norm, symmetrize, PSD_TOL,
};
use crate::model::{NormBounds, SwitchedSystem};
use crate::ode::Rk4;
use crate::structure::{HistoryField, HistoryIndex, ModeHistory, TimeGrid};

/// Terminal index `M`: `Sigma(T) = M^{-1} I`, with `M = inf` meaning zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerminalIndex {
    Finite(f64),
    Infinite,
}

impl TerminalIndex {
    pub fn inverse(&self) -> f64 {
        match self {
            TerminalIndex::Finite(m) => 1.0 / m,
            TerminalIndex::Infinite => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, TerminalIndex::Finite(_))
    }

    fn sort_key(&self) -> f64 {
        match self {
            TerminalIndex::Finite(m) => *m,
            TerminalIndex::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for TerminalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalIndex::Finite(m) => write!(f, "{m}"),
            TerminalIndex::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for TerminalIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TerminalIndex::Finite(m) => s.serialize_f64(*m),
            TerminalIndex::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for TerminalIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Finite(f64),
            Named(String),
        }
        match Raw::deserialize(d)? {
            Raw::Finite(m) if m > 0.0 && m.is_finite() => Ok(TerminalIndex::Finite(m)),
            Raw::Finite(m) => Err(serde::de::Error::custom(format!("terminal index must be positive, got {m}"))),
            Raw::Named(s) if s == "inf" => Ok(TerminalIndex::Infinite),
            Raw::Named(s) => {
                Err(serde::de::Error::custom(format!("terminal index must be a number or \"inf\", got {s:?}")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiCoefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl RiccatiCoefficients {
    pub fn zeros(n: usize) -> Self {
        Self { a: DMatrix::zeros(n, n), b: DMatrix::zeros(n, n), c: DMatrix::zeros(n, n) }
    }

    /// Right-hand side `p c p + a p + p a^T - b`.
    pub fn riccati_rhs(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        p * &self.c * p + &self.a * p + p * self.a.transpose() - &self.b
    }

    /// Right-hand side `a q + q a^T - b`.
    pub fn lyapunov_rhs(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * q + q * self.a.transpose() - &self.b
    }
}

/// Norm bounds satisfied by every assembled `(a, b, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoefficientBounds {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CoefficientBounds {
    pub fn from_norms(nb: &NormBounds, n_weight: f64) -> Self {
        Self {
            a: nb.a + nb.lambda * (nb.c + 1.5),
            b: n_weight * nb.b * nb.b + nb.lambda,
            c: nb.lambda * (nb.c + 1.0).powi(2),
        }
    }
}

/// Assembles `(a, b, c)` at `(seq, t)` from the next-level values
/// `next[theta] = sigma_{j+1}(seq ⊕ theta, t)` (`None` for marks without a
/// continuation, treated as zero).
pub fn assemble_generic_coeffs(
    sys: &SwitchedSystem,
    seq: &[usize],
    t: f64,
    next: &[Option<DMatrix<f64>>],
    n_weight: f64,
) -> Result<RiccatiCoefficients> {
    let n = sys.state_dim();
    let v = sys.eval_coefficients(seq, t)?;
    let rates = sys.history_compensator(seq, t);
    let lambda: f64 = rates.iter().sum();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = &v.a + &eye * (0.5 * lambda);
    let mut b = &v.b * v.b.transpose() * n_weight;
    let mut c = DMatrix::zeros(n, n);
    for (theta, &r) in rates.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let d = &v.c[theta] + &eye;
        match next.get(theta).and_then(|s| s.as_ref()) {
            Some(s) => {
                let k = inv_identity_plus(s)?;
                let sk = s * &k;
                a -= &sk * &d * r;
                b += &sk * r;
                c += d.transpose() * &k * &d * r;
            }
            None => c += d.transpose() * &d * r,
        }
    }
    symmetrize(&mut b);
    symmetrize(&mut c);
    Ok(RiccatiCoefficients { a, b, c })
}

/// Values and node slopes of a backward solve on a grid, column-major.
#[derive(Clone, Debug)]
struct PairPath {
    p: Vec<f64>,
    p_slopes: Vec<f64>,
    q: Vec<f64>,
}

/// Integrates the Riccati equation for `p` and the Lyapunov equation for
/// `q` backward over `grid`, sharing coefficient evaluations. Aborts when
/// `|p|` exceeds ten times `|q|`.
fn integrate_pair<F>(
    n: usize,
    grid: &TimeGrid,
    p_terminal: &DMatrix<f64>,
    q_terminal: &DMatrix<f64>,
    mut coeffs: F,
) -> Result<PairPath>
where
    F: FnMut(f64) -> Result<RiccatiCoefficients>,
{
    let nn = n * n;
    let len = grid.len();
    let mut out = PairPath { p: vec![0.0; len * nn], p_slopes: vec![0.0; len * nn], q: vec![0.0; len * nn] };
    let mut y = vec![0.0; 2 * nn];
    y[..nn].copy_from_slice(p_terminal.as_slice());
    y[nn..].copy_from_slice(q_terminal.as_slice());
    let last = len - 1;
    out.p[last * nn..].copy_from_slice(&y[..nn]);
    out.q[last * nn..].copy_from_slice(&y[nn..]);
    let mut rk = Rk4::new(2 * nn);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        if failure.borrow().is_some() {
            dy.fill(0.0);
            return;
        }
        match coeffs(t) {
            Ok(c) => {
                let p = DMatrix::from_column_slice(n, n, &y[..nn]);
                let q = DMatrix::from_column_slice(n, n, &y[nn..]);
                dy[..nn].copy_from_slice(c.riccati_rhs(&p).as_slice());
                dy[nn..].copy_from_slice(c.lyapunov_rhs(&q).as_slice());
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                dy.fill(0.0);
            }
        }
    };
    let h = grid.h();
    for i in (0..last).rev() {
        let t_hi = grid.node(i + 1);
        let slope = rk.step(t_hi, -h, &mut y, &mut rhs);
        out.p_slopes[(i + 1) * nn..(i + 2) * nn].copy_from_slice(&slope[..nn]);
        let mut p = DMatrix::from_column_slice(n, n, &y[..nn]);
        let mut q = DMatrix::from_column_slice(n, n, &y[nn..]);
        symmetrize(&mut p);
        symmetrize(&mut q);
        y[..nn].copy_from_slice(p.as_slice());
        y[nn..].copy_from_slice(q.as_slice());
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("Riccati escape: non-finite value at t = {}", grid.node(i))));
        }
        let (pn, qn) = (spectral_norm(&p), spectral_norm(&q));
        if pn > 10.0 * qn.max(f64::MIN_POSITIVE) && pn > 1e-12 {
            return Err(Error::Numerical(format!(
                "Riccati escape at t = {}: |p| = {pn:.3e} exceeds ten times the Lyapunov bound {qn:.3e}",
                grid.node(i)
            )));
        }
        out.p[i * nn..(i + 1) * nn].copy_from_slice(&y[..nn]);
        out.q[i * nn..(i + 1) * nn].copy_from_slice(&y[nn..]);
    }
    let mut dy = vec![0.0; 2 * nn];
    rhs(grid.node(0), &y, &mut dy);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    out.p_slopes[..nn].copy_from_slice(&dy[..nn]);
    Ok(out)
}

fn unpack(flat: &[f64], n: usize) -> Vec<DMatrix<f64>> {
    flat.chunks(n * n).map(|c| DMatrix::from_column_slice(n, n, c)).collect()
}

/// Backward RK4 solve of `dp/dt = p c p + a p + p a^T - b` from
/// `p(T) = terminal`, symmetrized after every step.
pub fn solve_generic_riccati<F>(coeffs: F, terminal: &DMatrix<f64>, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(f64) -> RiccatiCoefficients,
{
    let n = terminal.nrows();
    if asymmetry(terminal) > 1e-12 || min_eigenvalue(terminal) < -PSD_TOL {
        return Err(Error::Domain("terminal must be symmetric positive semidefinite".into()));
    }
    let q0 = DMatrix::identity(n, n) * max_eigenvalue(terminal).max(1.0);
    let path = integrate_pair(n, grid, terminal, &q0, |t| Ok(coeffs(t)))?;
    Ok(unpack(&path.p, n))
}

/// Solution of `dq/dt = a q + q a^T - b` backward from `terminal`.
pub fn lyapunov_upper_bound<F>(coeffs: F, terminal: &DMatrix<f64>, grid: &TimeGrid) -> Vec<DMatrix<f64>>
where
    F: Fn(f64) -> RiccatiCoefficients,
{
    let n = terminal.nrows();
    let zero = DMatrix::zeros(n, n);
    let path = integrate_pair(n, grid, &zero, terminal, |t| {
        let mut c = coeffs(t);
        c.c.fill(0.0);
        Ok(c)
    })
    .expect("linear equation cannot fail");
    unpack(&path.q, n)
}

/// Lower bound `c_M` with `Sigma^M >= c_M I`, from the inverse equation
/// driven by worst-case coefficient bounds.
pub fn lower_bound_cm(sys: &SwitchedSystem, n_weight: f64, m: TerminalIndex) -> Result<f64> {
    let TerminalIndex::Finite(m) = m else {
        return Err(Error::Domain("c_M is only defined for finite M".into()));
    };
    let bounds = CoefficientBounds::from_norms(&sys.bounds(), n_weight);
    Ok(cm_from_constants(m, bounds.a, bounds.c, sys.horizon()))
}

/// `1 / u(T)` for `u' = 2 alpha u + gamma`, `u(0) = m`.
pub fn cm_from_constants(m: f64, alpha: f64, gamma: f64, horizon: f64) -> f64 {
    let u = if alpha == 0.0 {
        m + gamma * horizon
    } else {
        let s = gamma / (2.0 * alpha);
        (m + s) * (2.0 * alpha * horizon).exp() - s
    };
    1.0 / u
}

#[derive(Clone, Debug, Serialize)]
pub struct RiccatiDiagnostics {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of `lyapunov - sigma`.
    pub min_lyapunov_margin: f64,
    /// Smallest eigenvalue of `I + sigma + Theta` over existing marks.
    pub min_jump_eigenvalue: f64,
    pub c_m: Option<f64>,
    /// Smallest eigenvalue of `sigma - c_M I` (finite `M`).
    pub min_cm_margin: Option<f64>,
    pub terminal_exact: bool,
}

/// `(Sigma, Theta)` for one `(N, M)`.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub n_weight: f64,
    pub m: TerminalIndex,
    index: HistoryIndex,
    sigma: HistoryField,
    lyapunov: HistoryField,
    pub diagnostics: RiccatiDiagnostics,
}

impl RiccatiSolution {
    pub fn index(&self) -> &HistoryIndex {
        &self.index
    }

    pub fn grid(&self) -> &TimeGrid {
        self.sigma.grid()
    }

    pub fn sigma_field(&self) -> &HistoryField {
        &self.sigma
    }

    pub fn lyapunov_field(&self) -> &HistoryField {
        &self.lyapunov
    }

    pub fn dim(&self) -> usize {
        self.sigma.shape().0
    }

    /// `sigma_j(h, t)`, cubic readout.
    pub fn sigma(&self, h: usize, t: f64) -> DMatrix<f64> {
        self.sigma.eval_smooth(h, t)
    }

    /// `sigma_{j+1}(h ⊕ theta, t)`, zero past the jump cap or for fictive marks.
    pub fn sigma_next(&self, h: usize, t: f64, theta: usize) -> DMatrix<f64> {
        match self.index.child(h, theta) {
            Some(c) => self.sigma.eval_smooth(c, t),
            None => DMatrix::zeros(self.dim(), self.dim()),
        }
    }

    pub fn theta(&self, h: usize, t: f64, theta: usize) -> DMatrix<f64> {
        self.sigma_next(h, t, theta) - self.sigma(h, t)
    }

    pub fn field_eval(&self, e: &ModeHistory, t: f64) -> Result<DMatrix<f64>> {
        self.sigma.field_eval(&self.index, e, t)
    }

    pub fn theta_eval(&self, e: &ModeHistory, t: f64, theta: usize) -> Result<DMatrix<f64>> {
        self.sigma.jump_difference(&self.index, e, t, theta)
    }

    fn next_values(&self, h: usize, t: f64) -> Vec<Option<DMatrix<f64>>> {
        (0..self.index.mode_count()).map(|th| self.index.child(h, th).map(|c| self.sigma.eval_smooth(c, t))).collect()
    }

    /// Assembled `(a, b, c)` for history `h` at `t`.
    pub fn coefficients(&self, sys: &SwitchedSystem, h: usize, t: f64) -> Result<RiccatiCoefficients> {
        assemble_generic_coeffs(sys, self.index.seq(h), t, &self.next_values(h, t), self.n_weight)
    }

    /// Largest norms of `(a, b, c)` over all histories and nodes.
    pub fn coefficient_norms(&self, sys: &SwitchedSystem) -> Result<CoefficientBounds> {
        let mut worst = CoefficientBounds { a: 0.0, b: 0.0, c: 0.0 };
        for h in 0..self.index.len() {
            for t in self.grid().nodes() {
                let c = self.coefficients(sys, h, t)?;
                worst.a = worst.a.max(spectral_norm(&c.a));
                worst.b = worst.b.max(spectral_norm(&c.b));
                worst.c = worst.c.max(spectral_norm(&c.c));
            }
        }
        Ok(worst)
    }

    pub fn write_sigma_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.sigma.write_csv(&self.index, w)
    }

    /// `Theta` per history, node and existing mark, CSV.
    pub fn write_theta_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let cols: Vec<String> = (0..n * n).map(|i| format!("v{i}")).collect();
        writeln!(w, "history_id,history,mark,t,{}", cols.join(","))?;
        for h in 0..self.index.len() {
            for th in 0..self.index.mode_count() {
                if th == *self.index.seq(h).last().unwrap() {
                    continue;
                }
                for (i, t) in self.grid().nodes().enumerate() {
                    let next = match self.index.child(h, th) {
                        Some(c) => self.sigma.node(c, i),
                        None => DMatrix::zeros(n, n),
                    };
                    let d = next - self.sigma.node(h, i);
                    let vals: Vec<String> = d.iter().map(|v| format!("{v:.16e}")).collect();
                    writeln!(w, "{h},{},{th},{t:.16e},{}", self.index.label(h), vals.join(","))?;
                }
            }
        }
        Ok(())
    }
}

/// Options for [`solve_iterated_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct IteratedOptions {
    /// Adds `k^{-1} I` to every `c` (penalized cross-check).
    pub penalty: Option<f64>,
}

pub fn solve_iterated(
    sys: &SwitchedSystem,
    grid: TimeGrid,
    n_weight: f64,
    m: TerminalIndex,
) -> Result<RiccatiSolution> {
    solve_iterated_with(sys, grid, n_weight, m, IteratedOptions::default())
}

/// Descending recursion over the jump count: level `J` is the constant
/// terminal value, every lower level is one backward solve per history.
pub fn solve_iterated_with(
    sys: &SwitchedSystem,
    grid: TimeGrid,
    n_weight: f64,
    m: TerminalIndex,
    opts: IteratedOptions,
) -> Result<RiccatiSolution> {
    if !(n_weight > 0.0) {
        return Err(Error::Domain(format!("penalization weight must be positive, got {n_weight}")));
    }
    if let TerminalIndex::Finite(v) = m {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("terminal index must be positive, got {v}")));
        }
    }
    if (grid.start(), grid.end()) != (0.0, sys.horizon()) {
        return Err(Error::Config("Riccati grid must cover [0, T]".into()));
    }
    let n = sys.state_dim();
    let index = HistoryIndex::new(sys);
    let mut sigma = HistoryField::zeros(grid, index.len(), n, n).with_slopes();
    let mut lyapunov = HistoryField::zeros(grid, index.len(), n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    let terminal = &eye * m.inverse();
    let q_terminal = &eye * m.inverse().max(1.0);

    for &h in index.level_ids(sys.max_jumps()) {
        for i in 0..grid.len() {
            sigma.set_node(h, i, &terminal);
            lyapunov.set_node(h, i, &q_terminal);
        }
    }
    for level in (0..sys.max_jumps()).rev() {
        let ids = index.level_ids(level).to_vec();
        let solved: Vec<Result<PairPath>> = ids
            .par_iter()
            .map(|&h| {
                let children: Vec<Option<usize>> = (0..index.mode_count()).map(|th| index.child(h, th)).collect();
                let sigma = &sigma;
                integrate_pair(n, &grid, &terminal, &q_terminal, |t| {
                    let next: Vec<Option<DMatrix<f64>>> =
                        children.iter().map(|c| c.map(|c| sigma.eval_smooth(c, t))).collect();
                    let mut co = assemble_generic_coeffs(sys, index.seq(h), t, &next, n_weight)?;
                    if let Some(k) = opts.penalty {
                        co.c += &eye / k;
                    }
                    Ok(co)
                })
            })
            .collect();
        for (&h, res) in ids.iter().zip(solved) {
            let path = res?;
            let (v, s) = sigma.history_parts_mut(h);
            v.copy_from_slice(&path.p);
            s.expect("sigma has slopes").copy_from_slice(&path.p_slopes);
            lyapunov.history_slice_mut(h).copy_from_slice(&path.q);
            // Terminal value is assigned, not integrated.
            sigma.node_slice_mut(h, grid.steps()).copy_from_slice(terminal.as_slice());
        }
    }

    let c_m = if m.is_finite() { Some(lower_bound_cm(sys, n_weight, m)?) } else { None };
    let mut diag = RiccatiDiagnostics {
        max_asymmetry: 0.0,
        min_eigenvalue: f64::INFINITY,
        min_lyapunov_margin: f64::INFINITY,
        min_jump_eigenvalue: f64::INFINITY,
        c_m,
        min_cm_margin: c_m.map(|_| f64::INFINITY),
        terminal_exact: true,
    };
    for h in 0..index.len() {
        diag.terminal_exact &= sigma.node(h, grid.steps()) == terminal;
        for i in 0..grid.len() {
            let s = sigma.node(h, i);
            let ev = min_eigenvalue(&s);
            diag.max_asymmetry = diag.max_asymmetry.max(asymmetry(&s));
            diag.min_eigenvalue = diag.min_eigenvalue.min(ev);
            diag.min_lyapunov_margin = diag.min_lyapunov_margin.min(min_eigenvalue(&(lyapunov.node(h, i) - &s)));
            if let (Some(cm), Some(margin)) = (c_m, diag.min_cm_margin.as_mut()) {
                *margin = margin.min(ev - cm);
            }
            for th in 0..index.mode_count() {
                if let Some(c) = index.child(h, th) {
                    diag.min_jump_eigenvalue = diag.min_jump_eigenvalue.min(min_eigenvalue(&(&eye + sigma.node(c, i))));
                }
            }
        }
    }
    Ok(RiccatiSolution { n_weight, m, index, sigma, lyapunov, diagnostics: diag })
}

/// Order and convergence checks over an `M`-schedule.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// Schedule sorted increasingly (finite entries only).
    pub schedule: Vec<f64>,
    /// Worst `min eig(Sigma^M - Sigma^{M'})` over `M <= M'` pairs and nodes.
    pub worst_order_margin: f64,
    pub monotone: bool,
    /// `sup |Sigma^M - Sigma^inf|` per schedule entry.
    pub gaps: Vec<f64>,
    pub gaps_decreasing: bool,
}

/// Checks `Sigma^{M'} <= Sigma^M` for `M <= M'` and that the sup gap to
/// `Sigma^inf` decreases along the schedule. Input order is irrelevant.
pub fn check_convergence(finite: &[&RiccatiSolution], infinite: &RiccatiSolution) -> ConvergenceReport {
    let mut sols: Vec<&RiccatiSolution> = finite.to_vec();
    sols.sort_by(|a, b| a.m.sort_key().total_cmp(&b.m.sort_key()));
    let mut chain: Vec<&RiccatiSolution> = sols.clone();
    chain.push(infinite);
    let idx = infinite.index();
    let grid = *infinite.grid();
    let mut worst = f64::INFINITY;
    for w in chain.windows(2) {
        for h in 0..idx.len() {
            for i in 0..grid.len() {
                let d = w[0].sigma.node(h, i) - w[1].sigma.node(h, i);
                worst = worst.min(min_eigenvalue(&d));
            }
        }
    }
    let gaps: Vec<f64> = sols
        .iter()
        .map(|s| {
            let mut g: f64 = 0.0;
            for h in 0..idx.len() {
                for i in 0..grid.len() {
                    g = g.max(spectral_norm(&(s.sigma.node(h, i) - infinite.sigma.node(h, i))));
                }
            }
            g
        })
        .collect();
    ConvergenceReport {
        schedule: sols.iter().map(|s| s.m.sort_key()).collect(),
        worst_order_margin: worst,
        monotone: worst >= -PSD_TOL,
        gaps_decreasing: gaps.windows(2).all(|w| w[1] < w[0]),
        gaps,
    }
}

/// `true` when `sigma(h, t) <= lyapunov(h, t)` at every node.
pub fn below_lyapunov(sol: &RiccatiSolution) -> bool {
    let idx = sol.index();
    (0..idx.len()).all(|h| (0..sol.grid().len()).all(|i| loewner_le(&sol.sigma.node(h, i), &sol.lyapunov.node(h, i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(a: f64, b: f64, c: f64) -> RiccatiCoefficients {
        RiccatiCoefficients {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            c: DMatrix::from_element(1, 1, c),
        }
    }

    fn unit_grid(steps: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, steps).unwrap()
    }

    #[test]
    fn zero_dynamics_keep_terminal() {
        let p = solve_generic_riccati(|_| scalar(0.0, 0.0, 0.0), &DMatrix::from_element(1, 1, 0.5), &unit_grid(10))
            .unwrap();
        assert!(p.iter().all(|m| m[(0, 0)] == 0.5));
    }

    #[test]
    fn linear_scalar() {
        let g = unit_grid(100);
        let p = solve_generic_riccati(|_| scalar(0.0, 1.0, 0.0), &DMatrix::zeros(1, 1), &g).unwrap();
        for (i, m) in p.iter().enumerate() {
            assert_relative_eq!(m[(0, 0)], 1.0 - g.node(i), epsilon = 1e-13);
        }
    }

    #[test]
    fn quadratic_scalar_closed_form() {
        let g = unit_grid(200);
        let p = solve_generic_riccati(|_| scalar(0.0, 0.0, 1.0), &DMatrix::from_element(1, 1, 1.0), &g).unwrap();
        for (i, m) in p.iter().enumerate() {
            assert_relative_eq!(m[(0, 0)], 1.0 / (1.0 + 1.0 - g.node(i)), epsilon = 1e-10);
        }
        assert_relative_eq!(p[0][(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_examples() {
        let g = unit_grid(400);
        let q = lyapunov_upper_bound(|_| scalar(0.0, 0.0, 0.0), &DMatrix::identity(1, 1), &g);
        assert!(q.iter().all(|m| m[(0, 0)] == 1.0));
        // dq/dt = 2q backward from q(1) = 1.
        let q = lyapunov_upper_bound(|_| scalar(1.0, 0.0, 0.0), &DMatrix::identity(1, 1), &g);
        assert_relative_eq!(q[0][(0, 0)], (-2f64).exp(), epsilon = 1e-10);
        let q = lyapunov_upper_bound(|_| scalar(-1.0, 0.0, 0.0), &DMatrix::identity(1, 1), &g);
        assert_relative_eq!(q[0][(0, 0)], 2f64.exp(), epsilon = 1e-9);
    }

    #[test]
    fn riccati_below_lyapunov() {
        let g = unit_grid(400);
        let co = |t: f64| scalar(0.5 - t, 1.0 + t, 2.0);
        let p = solve_generic_riccati(co, &DMatrix::from_element(1, 1, 0.25), &g).unwrap();
        let q = lyapunov_upper_bound(co, &DMatrix::identity(1, 1), &g);
        assert!(p.iter().zip(&q).all(|(p, q)| p[(0, 0)] <= q[(0, 0)] + 1e-12));
    }

    #[test]
    fn escape_guard_fires_on_negative_quadratic_term() {
        let res =
            solve_generic_riccati(|_| scalar(0.0, 0.0, -50.0), &DMatrix::from_element(1, 1, 1.0), &unit_grid(100));
        assert!(matches!(res, Err(Error::Numerical(msg)) if msg.contains("Riccati escape")));
    }

    #[test]
    fn assembly_with_zero_next_field() {
        let sys = catalog::example4(3);
        let zero = Some(DMatrix::zeros(2, 2));
        let co = assemble_generic_coeffs(&sys, &[0], 0.3, &[zero.clone(), zero], 4.0).unwrap();
        assert_eq!(co.a, DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]));
        assert_eq!(co.b, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 4.0]));
        assert_eq!(co.c, DMatrix::identity(2, 2));
    }

    #[test]
    fn assembly_without_jumps() {
        let sys = catalog::zero_system(2, 1, 2, 0.0);
        let co = assemble_generic_coeffs(&sys, &[0], 0.3, &[None, Some(DMatrix::identity(2, 2))], 3.0).unwrap();
        assert_eq!(co, RiccatiCoefficients::zeros(2));
    }

    #[test]
    fn cm_closed_form() {
        assert_eq!(cm_from_constants(2.0, 0.0, 0.0, 1.0), 0.5);
        assert!(cm_from_constants(2.0, 1.0, 1.0, 1.0) < cm_from_constants(2.0, 0.5, 1.0, 1.0));
        assert!(cm_from_constants(2.0, 1.0, 2.0, 1.0) < cm_from_constants(2.0, 1.0, 1.0, 1.0));
        let sys = catalog::zero_system(2, 1, 2, 0.0);
        assert_eq!(lower_bound_cm(&sys, 1.0, TerminalIndex::Finite(2.0)).unwrap(), 0.5);
        assert!(lower_bound_cm(&sys, 1.0, TerminalIndex::Infinite).is_err());
    }

    #[test]
    fn zero_system_gives_constant_solution() {
        let sys = catalog::zero_system(2, 1, 3, 1.0);
        let sol = solve_iterated(&sys, unit_grid(50), 1.0, TerminalIndex::Finite(2.0)).unwrap();
        for h in 0..sol.index().len() {
            for i in 0..sol.grid().len() {
                let s = sol.sigma_field().node(h, i);
                assert!((s - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-14);
            }
            if sol.index().level(h) < 3 {
                let mark = 1 - sol.index().seq(h).last().unwrap();
                assert!(sol.theta(h, 0.4, mark).abs().max() < 1e-14);
            }
        }
    }

    /// Drift of the stochastic Riccati pair written directly in terms of
    /// `(Sigma, Theta)`; compared against the generic form.
    fn direct_rhs(
        sys: &SwitchedSystem,
        seq: &[usize],
        t: f64,
        sigma: &DMatrix<f64>,
        next: &[DMatrix<f64>],
        nw: f64,
    ) -> DMatrix<f64> {
        let v = sys.eval_coefficients(seq, t).unwrap();
        let rates = sys.history_compensator(seq, t);
        let n = sigma.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut out = &v.a * sigma + sigma * v.a.transpose() - &v.b * v.b.transpose() * nw;
        for (th, r) in rates.iter().enumerate() {
            let theta = &next[th] - sigma;
            let left = sigma * v.c[th].transpose() - &theta;
            let right = &v.c[th] * sigma - &theta;
            let k = (&eye + sigma + &theta).try_inverse().unwrap();
            out += (left * k * right - theta) * *r;
        }
        out
    }

    fn spd(vals: [f64; 3]) -> DMatrix<f64> {
        let l = DMatrix::from_row_slice(2, 2, &[vals[0], 0.0, vals[1], vals[2]]);
        &l * l.transpose()
    }

    proptest! {
        #[test]
        fn generic_form_matches_direct_form(
            seed in 0u64..50,
            s in prop::array::uniform3(-1.5f64..1.5),
            n1 in prop::array::uniform3(-1.5f64..1.5),
            n2 in prop::array::uniform3(-1.5f64..1.5),
            t in 0.0f64..1.0,
            nw in 1.0f64..20.0,
        ) {
            let sys = catalog::random_bounded(seed, 2);
            let sigma = spd(s);
            let next = vec![spd(n1), spd(n2), spd(n1) + spd(n2)];
            let seq = [0usize];
            let opt: Vec<_> = next.iter().cloned().map(Some).collect();
            let co = assemble_generic_coeffs(&sys, &seq, t, &opt, nw).unwrap();
            let got = co.riccati_rhs(&sigma);
            let want = direct_rhs(&sys, &seq, t, &sigma, &next, nw);
            prop_assert!((got - &want).abs().max() <= 1e-10 * (1.0 + want.abs().max()));
        }

        #[test]
        fn assembled_coefficients_respect_bounds(
            seed in 0u64..50,
            n1 in prop::array::uniform3(-2.0f64..2.0),
            n2 in prop::array::uniform3(-2.0f64..2.0),
            t in 0.0f64..1.0,
            nw in 1.0f64..20.0,
        ) {
            let sys = catalog::random_bounded(seed, 2);
            let opt = vec![Some(spd(n1)), Some(spd(n2)), Some(spd(n1) * 0.5)];
            let co = assemble_generic_coeffs(&sys, &[1], t, &opt, nw).unwrap();
            let bd = CoefficientBounds::from_norms(&sys.bounds(), nw);
            prop_assert!(spectral_norm(&co.a) <= bd.a + 1e-12);
            prop_assert!(spectral_norm(&co.b) <= bd.b + 1e-12);
            prop_assert!(spectral_norm(&co.c) <= bd.c + 1e-12);
            prop_assert!(min_eigenvalue(&co.b) >= -PSD_TOL);
            prop_assert!(min_eigenvalue(&co.c) >= -PSD_TOL);
        }
    }
}
