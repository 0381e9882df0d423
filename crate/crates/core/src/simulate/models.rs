//! Forward systems integrated along mode paths.

use nalgebra::{DMatrix, DVector};

use crate::bsde::{solve_eta_zeta, EtaZetaSpec, Solved};
use crate::error::{Error, Result};
use crate::linalg::invert;
use crate::model::SwitchedSystem;
use crate::riccati::RiccatiSolution;
use crate::simulate::integrate::{CoefficientTable, PathSystem, StageContext};
use crate::simulate::path::ModePath;
use crate::structure::{HistoryIndex, TimeGrid};
use crate::target::TargetSpec;

/// Open-loop control `u(history, t, T_1)`.
pub type OpenLoopFn<'a> = dyn Fn(usize, f64, Option<f64>) -> DVector<f64> + Sync + 'a;
/// Second component `Z(history, t, T_1, mark)`.
pub type ZFn<'a> = dyn Fn(usize, f64, Option<f64>, usize) -> DVector<f64> + Sync + 'a;

pub enum ControlLaw<'a> {
    Zero,
    OpenLoop(&'a OpenLoopFn<'a>),
    /// `u* = -N B^T Y` with `Y` integrated along the path.
    Optimal(&'a OptimalCompanion<'a>),
}

/// `out += M x` for a column-major `rows x cols` block.
fn gemv(m: &[f64], rows: usize, x: &[f64], out: &mut [f64]) {
    for (col, xj) in m.chunks_exact(rows).zip(x) {
        for (o, mij) in out[..rows].iter_mut().zip(col) {
            *o += mij * xj;
        }
    }
}

fn component_weights(sol: &crate::bsde::BsdeSolution, level: usize, t1: Option<f64>, out: &mut [f64]) {
    for (c, w) in out.iter_mut().enumerate() {
        *w = match (level, t1) {
            (0, _) | (_, None) => (c == 0) as u8 as f64,
            (_, Some(t1)) => sol.component_weight(c, t1),
        };
    }
}

/// `dX = (A X + B u) dt + int (C X + Z) dq~` with running cost
/// `w |u|^2 + sum_theta r |Z(theta)|^2`; state `[X, cost, int |u|^2]`.
pub struct ForwardModel<'a> {
    pub sys: &'a SwitchedSystem,
    pub index: &'a HistoryIndex,
    pub x0: DVector<f64>,
    pub control: Option<&'a OpenLoopFn<'a>>,
    pub z: Option<&'a ZFn<'a>>,
    /// Weight `1/N` of the control energy.
    pub control_weight: f64,
}

impl ForwardModel<'_> {
    fn layout(&self) -> (usize, usize, usize) {
        (self.sys.state_dim(), self.sys.control_dim(), self.sys.mode_count())
    }
}

impl PathSystem for ForwardModel<'_> {
    fn dim(&self) -> usize {
        self.sys.state_dim() + 2
    }

    fn coeff_len(&self) -> usize {
        let (n, d, k) = self.layout();
        n * n + n * d + k
    }

    fn coeffs_at(&self, h: usize, t: f64, out: &mut [f64]) -> Result<()> {
        let (n, d, _) = self.layout();
        let seq = self.index.seq(h);
        let co = self.sys.eval_coefficients(seq, t)?;
        let rates = self.sys.history_compensator(seq, t);
        let mut drift = co.a.clone();
        for (r, c) in rates.iter().zip(&co.c) {
            drift -= c * *r;
        }
        out[..n * n].copy_from_slice(drift.as_slice());
        out[n * n..n * n + n * d].copy_from_slice(co.b.as_slice());
        out[n * n + n * d..].copy_from_slice(&rates);
        Ok(())
    }

    fn initial(&self, _path: &ModePath) -> Result<Vec<f64>> {
        let mut y = self.x0.as_slice().to_vec();
        y.extend([0.0, 0.0]);
        Ok(y)
    }

    fn rhs(&self, ctx: &StageContext, co: &[f64], y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n, d, _) = self.layout();
        let rates = &co[n * n + n * d..];
        dy.fill(0.0);
        gemv(&co[..n * n], n, &y[..n], dy);
        if let Some(u) = self.control {
            let u = u(ctx.history, ctx.t, ctx.first_jump);
            gemv(&co[n * n..n * n + n * d], n, u.as_slice(), dy);
            dy[n] += self.control_weight * u.norm_squared();
            dy[n + 1] += u.norm_squared();
        }
        if let Some(z) = self.z {
            for (mark, r) in rates.iter().enumerate() {
                if *r != 0.0 {
                    let zv = z(ctx.history, ctx.t, ctx.first_jump, mark);
                    for i in 0..n {
                        dy[i] -= r * zv[i];
                    }
                    dy[n] += r * zv.norm_squared();
                }
            }
        }
        Ok(())
    }

    fn jump(&self, ctx: &StageContext, mark: usize, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.sys.state_dim();
        let co = self.sys.eval_coefficients(self.index.seq(ctx.history), ctx.t)?;
        let x = DVector::from_column_slice(&y[..n]);
        let mut next = &x + &co.c[mark] * &x;
        if let Some(z) = self.z {
            next += z(ctx.history, ctx.t, ctx.first_jump, mark);
        }
        out[..n].copy_from_slice(next.as_slice());
        out[n..].copy_from_slice(&y[n..]);
        Ok(())
    }
}

/// Optimal companion pair: `Y` of the optimality system and the optimally
/// controlled `X`, with the running cost; state `[X, Y, cost, int |u|^2]`.
pub struct OptimalCompanion<'a> {
    sys: &'a SwitchedSystem,
    ric: &'a RiccatiSolution,
    eta: Solved<EtaZetaSpec<'a>>,
    grid: TimeGrid,
    x0: DVector<f64>,
    table: Option<CoefficientTable>,
}

struct JumpParts {
    c: DMatrix<f64>,
    l: DMatrix<f64>,
    zeta: Vec<DVector<f64>>,
}

impl<'a> OptimalCompanion<'a> {
    /// Solves `(eta, zeta)` for `xi` on the Riccati grid and tabulates the
    /// companion coefficients on `grid`.
    pub fn new(sys: &'a SwitchedSystem, ric: &'a RiccatiSolution, xi: &TargetSpec, grid: TimeGrid) -> Result<Self> {
        if ric.m.is_finite() {
            return Err(Error::Config("the optimal companion needs the M = inf Riccati solution".into()));
        }
        let eta = solve_eta_zeta(sys, ric, xi)?;
        let x0 = -eta.first(0, 0.0, 0.0);
        let mut out = Self { sys, ric, eta, grid, x0, table: None };
        out.table = Some(CoefficientTable::build(&out, ric.index().len(), &grid)?);
        Ok(out)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn eta(&self) -> &Solved<EtaZetaSpec<'a>> {
        &self.eta
    }

    pub fn riccati(&self) -> &RiccatiSolution {
        self.ric
    }

    /// Optimal initial datum `-eta(0)`.
    pub fn initial_state(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn n_weight(&self) -> f64 {
        self.ric.n_weight
    }

    pub(crate) fn table(&self) -> Option<&CoefficientTable> {
        self.table.as_ref()
    }

    fn components(&self) -> usize {
        self.eta.solution.component_count()
    }

    fn layout(&self) -> (usize, usize, usize, usize) {
        (self.sys.state_dim(), self.sys.control_dim(), self.sys.mode_count(), self.components())
    }

    fn jump_parts(&self, h: usize, t: f64, mark: usize, c: DMatrix<f64>) -> Result<JumpParts> {
        let n = self.sys.state_dim();
        let sigma = self.ric.sigma(h, t);
        let next = self.ric.sigma_next(h, t, mark);
        let eye = DMatrix::<f64>::identity(n, n);
        let k = invert(&(&eye + &next))?;
        let l = k * ((&c + &eye) * &sigma - &next);
        let sol = &self.eta.solution;
        let zeta = if self.ric.index().level(h) == 0 {
            let mut z = vec![self.eta.second(h, t, t, mark)?];
            z.extend((1..self.components()).map(|_| DVector::zeros(n)));
            z
        } else {
            (0..self.components())
                .map(|comp| sol.component_second(&self.eta.spec, comp, h, t, mark))
                .collect::<Result<_>>()?
        };
        Ok(JumpParts { c, l, zeta })
    }

    /// `u* = -N B^T Y` at `(history, t)`.
    pub fn control(&self, h: usize, t: f64, y: &[f64]) -> Result<DVector<f64>> {
        let co = self.sys.eval_coefficients(self.ric.index().seq(h), t)?;
        Ok(-(co.b.transpose() * DVector::from_column_slice(y)) * self.ric.n_weight)
    }
}

impl PathSystem for OptimalCompanion<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.state_dim() + 2
    }

    fn coeff_len(&self) -> usize {
        let (n, d, k, m) = self.layout();
        3 * n * n + d * n + 2 * m * n + k * (n * n + m * n)
    }

    fn coeffs_at(&self, h: usize, t: f64, out: &mut [f64]) -> Result<()> {
        let (n, d, _, m) = self.layout();
        let nn = n * n;
        let seq = self.ric.index().seq(h);
        let co = self.sys.eval_coefficients(seq, t)?;
        let rates = self.sys.history_compensator(seq, t);
        let eye = DMatrix::<f64>::identity(n, n);
        let mut fxx = co.a.clone();
        let mut fxy = -(&co.b * co.b.transpose()) * self.ric.n_weight;
        let mut fyy = -co.a.transpose();
        let mut fx = vec![DVector::<f64>::zeros(n); m];
        let mut fy = vec![DVector::<f64>::zeros(n); m];
        out.fill(0.0);
        let bt = co.b.transpose() * self.ric.n_weight.sqrt();
        out[3 * nn..3 * nn + d * n].copy_from_slice(bt.as_slice());
        let mark_base = 3 * nn + d * n + 2 * m * n;
        for (mark, r) in rates.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let parts = self.jump_parts(h, t, mark, co.c[mark].clone())?;
            let dt = (&parts.c + &eye).transpose();
            fxx -= &parts.c * *r;
            fxy += &parts.l * *r;
            fyy -= &dt * &parts.l * *r;
            let off = mark_base + mark * (nn + m * n);
            let sr = r.sqrt();
            out[off..off + nn].copy_from_slice((&parts.l * sr).as_slice());
            for (c, z) in parts.zeta.iter().enumerate() {
                fx[c] += z * *r;
                fy[c] -= &dt * z * *r;
                out[off + nn + c * n..off + nn + (c + 1) * n].copy_from_slice((z * sr).as_slice());
            }
        }
        out[..nn].copy_from_slice(fxx.as_slice());
        out[nn..2 * nn].copy_from_slice(fxy.as_slice());
        out[2 * nn..3 * nn].copy_from_slice(fyy.as_slice());
        for c in 0..m {
            let off = 3 * nn + d * n + 2 * c * n;
            out[off..off + n].copy_from_slice(fx[c].as_slice());
            out[off + n..off + 2 * n].copy_from_slice(fy[c].as_slice());
        }
        Ok(())
    }

    fn initial(&self, _path: &ModePath) -> Result<Vec<f64>> {
        let n = self.sys.state_dim();
        let mut y = vec![0.0; 2 * n + 2];
        y[..n].copy_from_slice(self.x0.as_slice());
        Ok(y)
    }

    fn rhs(&self, ctx: &StageContext, co: &[f64], y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n, d, k, m) = self.layout();
        let nn = n * n;
        let mut w = [0.0; 8];
        let mut wv = vec![];
        let w: &mut [f64] = if m <= 8 {
            &mut w[..m]
        } else {
            wv.resize(m, 0.0);
            &mut wv
        };
        component_weights(&self.eta.solution, ctx.level, ctx.first_jump, w);
        let (x, yy) = (&y[..n], &y[n..2 * n]);
        dy.fill(0.0);
        {
            let (dx, rest) = dy.split_at_mut(n);
            gemv(&co[..nn], n, x, dx);
            gemv(&co[nn..2 * nn], n, yy, dx);
            gemv(&co[2 * nn..3 * nn], n, yy, &mut rest[..n]);
            for (c, wc) in w.iter().enumerate() {
                let off = 3 * nn + d * n + 2 * c * n;
                for i in 0..n {
                    dx[i] += wc * co[off + i];
                    rest[i] += wc * co[off + n + i];
                }
            }
        }
        let mut buf = [0.0; 16];
        let mut bufv = vec![];
        let g: &mut [f64] = if n.max(d) <= 16 {
            &mut buf[..n.max(d)]
        } else {
            bufv.resize(n.max(d), 0.0);
            &mut bufv
        };
        g.fill(0.0);
        gemv(&co[3 * nn..3 * nn + d * n], d, yy, g);
        let control = g[..d].iter().map(|v| v * v).sum::<f64>();
        dy[2 * n + 1] = self.ric.n_weight * control;
        let mut cost = control;
        let mark_base = 3 * nn + d * n + 2 * m * n;
        for mark in 0..k {
            let off = mark_base + mark * (nn + m * n);
            let block = &co[off..off + nn + m * n];
            g[..n].fill(0.0);
            gemv(&block[..nn], n, yy, g);
            for (c, wc) in w.iter().enumerate() {
                for i in 0..n {
                    g[i] += wc * block[nn + c * n + i];
                }
            }
            cost += g[..n].iter().map(|v| v * v).sum::<f64>();
        }
        dy[2 * n] = cost;
        Ok(())
    }

    fn jump(&self, ctx: &StageContext, mark: usize, y: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, _, _, m) = self.layout();
        let co = self.sys.eval_coefficients(self.ric.index().seq(ctx.history), ctx.t)?;
        let parts = self.jump_parts(ctx.history, ctx.t, mark, co.c[mark].clone())?;
        let mut w = vec![0.0; m];
        component_weights(&self.eta.solution, ctx.level, ctx.first_jump, &mut w);
        let x = DVector::from_column_slice(&y[..n]);
        let yy = DVector::from_column_slice(&y[n..2 * n]);
        let mut g = &parts.l * &yy;
        for (z, wc) in parts.zeta.iter().zip(&w) {
            g += z * *wc;
        }
        let xn = &x + &parts.c * &x - &g;
        let yn = yy + g;
        out[..n].copy_from_slice(xn.as_slice());
        out[n..2 * n].copy_from_slice(yn.as_slice());
        out[2 * n..].copy_from_slice(&y[2 * n..]);
        Ok(())
    }
}

/// Finite-`M` companion `Y^M` integrated next to the controlled `X` for a
/// given `(x, u, Z)`; state `[X, Y^M]`.
pub struct FiniteCompanion<'a> {
    pub sys: &'a SwitchedSystem,
    pub eta: &'a Solved<EtaZetaSpec<'a>>,
    pub x0: DVector<f64>,
    pub control: &'a OpenLoopFn<'a>,
    pub z: &'a ZFn<'a>,
}

impl FiniteCompanion<'_> {
    fn ric(&self) -> &RiccatiSolution {
        self.eta.spec.ric
    }

    fn t1(ctx: &StageContext) -> f64 {
        if ctx.level == 0 {
            ctx.t
        } else {
            ctx.first_jump.expect("a jump happened")
        }
    }
}

impl PathSystem for FiniteCompanion<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.state_dim()
    }

    fn initial(&self, _path: &ModePath) -> Result<Vec<f64>> {
        let sigma0 = self.ric().sigma(0, 0.0);
        let y0 = invert(&sigma0)? * (&self.x0 + self.eta.first(0, 0.0, 0.0));
        Ok(self.x0.iter().chain(y0.iter()).copied().collect())
    }

    fn rhs(&self, ctx: &StageContext, _co: &[f64], y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.sys.state_dim();
        let (h, t) = (ctx.history, ctx.t);
        let ric = self.ric();
        let co = self.sys.eval_coefficients(ric.index().seq(h), t)?;
        let rates = self.sys.history_compensator(ric.index().seq(h), t);
        let x = DVector::from_column_slice(&y[..n]);
        let yy = DVector::from_column_slice(&y[n..]);
        let u = (self.control)(h, t, ctx.first_jump);
        let eye = DMatrix::<f64>::identity(n, n);
        let sigma = ric.sigma(h, t);
        let sinv = invert(&sigma)?;
        let mut dx = &co.a * &x + &co.b * &u;
        let mut dyy = -co.a.transpose() * &yy + &sinv * (&co.b * co.b.transpose() * &yy * ric.n_weight + &co.b * &u);
        for (mark, r) in rates.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let c = &co.c[mark];
            let next = ric.sigma_next(h, t, mark);
            let z = (self.z)(h, t, ctx.first_jump, mark);
            let zeta = self.eta.second(h, t, Self::t1(ctx), mark)?;
            let w = invert(&(&eye + &next))? * ((c + &eye) * &sigma - &next) * &yy + zeta;
            dx -= (c * &x + &z) * *r;
            dyy -= ((&sinv + &eye + c.transpose()) * w + &sinv * z) * *r;
        }
        dy[..n].copy_from_slice(dx.as_slice());
        dy[n..].copy_from_slice(dyy.as_slice());
        Ok(())
    }

    fn jump(&self, ctx: &StageContext, mark: usize, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.sys.state_dim();
        let (h, t) = (ctx.history, ctx.t);
        let ric = self.ric();
        let co = self.sys.eval_coefficients(ric.index().seq(h), t)?;
        let eye = DMatrix::<f64>::identity(n, n);
        let c = &co.c[mark];
        let x = DVector::from_column_slice(&y[..n]);
        let yy = DVector::from_column_slice(&y[n..]);
        let sigma = ric.sigma(h, t);
        let next = ric.sigma_next(h, t, mark);
        let next_inv = invert(&next)?;
        let z = (self.z)(h, t, ctx.first_jump, mark);
        let zeta = self.eta.second(h, t, Self::t1(ctx), mark)?;
        let xn = &x + c * &x + &z;
        let yn = &yy + &next_inv * (&z + ((c + &eye) * &sigma - &next) * &yy) + (&eye + &next_inv) * zeta;
        out[..n].copy_from_slice(xn.as_slice());
        out[n..].copy_from_slice(yn.as_slice());
        Ok(())
    }
}
