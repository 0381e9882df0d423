//! Path-wise RK4 integration across grid nodes and off-grid jump times.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::simulate::path::ModePath;
use crate::structure::{HistoryIndex, TimeGrid};

/// Where the coefficients of an RK4 stage are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Node(usize),
    Mid(usize),
    Off(f64),
}

/// Stage context handed to [`PathSystem::rhs`].
#[derive(Clone, Copy, Debug)]
pub struct StageContext {
    pub history: usize,
    pub level: usize,
    pub t: f64,
    pub first_jump: Option<f64>,
}

/// An ODE along a mode path with jump maps at the switching times.
pub trait PathSystem: Sync {
    fn dim(&self) -> usize;
    /// Length of the per-history coefficient block; `0` disables tables.
    fn coeff_len(&self) -> usize {
        0
    }
    fn coeffs_at(&self, _h: usize, _t: f64, _out: &mut [f64]) -> Result<()> {
        Ok(())
    }
    fn initial(&self, path: &ModePath) -> Result<Vec<f64>>;
    fn rhs(&self, ctx: &StageContext, coeffs: &[f64], y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// `y_plus` from `y_minus` at a jump of `ctx.history` to `mark`.
    fn jump(&self, ctx: &StageContext, mark: usize, y_minus: &[f64], y_plus: &mut [f64]) -> Result<()>;
}

/// Coefficients tabulated at grid nodes and midpoints for every history.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    points: usize,
    len: usize,
    data: Vec<f64>,
}

impl CoefficientTable {
    pub fn build<S: PathSystem>(sys: &S, histories: usize, grid: &TimeGrid) -> Result<Self> {
        let len = sys.coeff_len();
        let points = 2 * grid.steps() + 1;
        let blocks: Vec<Vec<f64>> = (0..histories)
            .into_par_iter()
            .map(|h| {
                let mut block = vec![0.0; points * len];
                for p in 0..points {
                    let t = if p % 2 == 0 { grid.node(p / 2) } else { grid.node(p / 2) + 0.5 * grid.h() };
                    sys.coeffs_at(h, t, &mut block[p * len..(p + 1) * len])?;
                }
                Ok(block)
            })
            .collect::<Result<_>>()?;
        Ok(Self { points, len, data: blocks.concat() })
    }

    fn get(&self, h: usize, point: Point) -> &[f64] {
        let p = match point {
            Point::Node(i) => 2 * i,
            Point::Mid(i) => 2 * i + 1,
            Point::Off(_) => unreachable!("off-grid points are evaluated directly"),
        };
        let start = (h * self.points + p) * self.len;
        &self.data[start..start + self.len]
    }
}

/// Samples of a process with both one-sided values at each jump.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    levels: Vec<usize>,
    values: Vec<f64>,
}

impl Trajectory {
    fn new(dim: usize) -> Self {
        Self { dim, times: vec![], levels: vec![], values: vec![] }
    }

    fn push(&mut self, t: f64, level: usize, y: &[f64]) {
        self.times.push(t);
        self.levels.push(level);
        self.values.extend_from_slice(&y[..self.dim]);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(t, jumps so far, value)`; a jump time appears twice, pre-jump first.
    pub fn samples(&self) -> impl Iterator<Item = (f64, usize, &[f64])> + '_ {
        self.times.iter().zip(&self.levels).zip(self.values.chunks(self.dim)).map(|((t, l), v)| (*t, *l, v))
    }

    pub fn terminal(&self) -> &[f64] {
        &self.values[self.values.len() - self.dim..]
    }

    /// Values of components `range` only.
    pub fn project(&self, range: std::ops::Range<usize>) -> Trajectory {
        let mut out = Trajectory::new(range.len());
        for (t, l, v) in self.samples() {
            out.push(t, l, &v[range.clone()]);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t,jumps")?;
        for k in 0..self.dim {
            write!(w, ",x{k}")?;
        }
        writeln!(w)?;
        for (t, l, v) in self.samples() {
            write!(w, "{t:.16e},{l}")?;
            for x in v {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Stepper {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    coeffs: Vec<f64>,
}

fn stage<S: PathSystem>(
    sys: &S,
    table: Option<&CoefficientTable>,
    scratch: &mut Vec<f64>,
    ctx: &StageContext,
    point: Point,
    y: &[f64],
    dy: &mut [f64],
) -> Result<()> {
    match (table, point) {
        (Some(tab), Point::Node(_) | Point::Mid(_)) => sys.rhs(ctx, tab.get(ctx.history, point), y, dy),
        _ => {
            sys.coeffs_at(ctx.history, ctx.t, scratch)?;
            sys.rhs(ctx, scratch, y, dy)
        }
    }
}

impl Stepper {
    fn new(dim: usize, coeff_len: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim], coeffs: vec![0.0; coeff_len] }
    }

    #[allow(clippy::too_many_arguments)]
    fn step<S: PathSystem>(
        &mut self,
        sys: &S,
        table: Option<&CoefficientTable>,
        base: StageContext,
        t0: f64,
        h: f64,
        points: [Point; 3],
        y: &mut [f64],
    ) -> Result<()> {
        let n = y.len();
        let Stepper { k, tmp, coeffs } = self;
        let [k1, k2, k3, k4] = k;
        let at = |t: f64| StageContext { t, ..base };
        stage(sys, table, coeffs, &at(t0), points[0], y, k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        stage(sys, table, coeffs, &at(t0 + 0.5 * h), points[1], tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        stage(sys, table, coeffs, &at(t0 + 0.5 * h), points[1], tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        stage(sys, table, coeffs, &at(t0 + h), points[2], tmp, k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// Integrates `sys` along `path`, returning the terminal state and, when
/// `record` is set, the trajectory of the first `record_dim` components.
pub fn integrate_path<S: PathSystem>(
    sys: &S,
    index: &HistoryIndex,
    grid: &TimeGrid,
    table: Option<&CoefficientTable>,
    path: &ModePath,
    record_dim: Option<usize>,
) -> Result<(Vec<f64>, Option<Trajectory>)> {
    let ids = path.history_ids(index);
    let mut y = sys.initial(path)?;
    let mut stepper = Stepper::new(y.len(), sys.coeff_len());
    let mut traj = record_dim.map(Trajectory::new);
    let mut level = 0;
    let mut t = grid.start();
    let mut i = 0;
    let mut aligned = true;
    if let Some(tr) = traj.as_mut() {
        tr.push(t, 0, &y);
    }
    let mut post = vec![0.0; y.len()];
    let ctx = |level: usize, t: f64| StageContext { history: ids[level], level, t, first_jump: path.first_jump_time() };
    while i < grid.steps() {
        let next_node = grid.node(i + 1);
        if level < path.jump_count() && path.times[level] < next_node {
            let tau = path.times[level];
            if tau > t {
                stepper.step(
                    sys,
                    table,
                    ctx(level, t),
                    t,
                    tau - t,
                    [Point::Off(t), Point::Off(0.5 * (t + tau)), Point::Off(tau)],
                    &mut y,
                )?;
            }
            sys.jump(&ctx(level, tau), path.modes[level], &y, &mut post)?;
            if let Some(tr) = traj.as_mut() {
                tr.push(tau, level, &y);
                tr.push(tau, level + 1, &post);
            }
            std::mem::swap(&mut y, &mut post);
            level += 1;
            t = tau;
            aligned = false;
            continue;
        }
        let points = if aligned {
            [Point::Node(i), Point::Mid(i), Point::Node(i + 1)]
        } else {
            [Point::Off(t), Point::Off(0.5 * (t + next_node)), Point::Off(next_node)]
        };
        stepper.step(sys, table, ctx(level, t), t, next_node - t, points, &mut y)?;
        i += 1;
        t = next_node;
        aligned = true;
        if let Some(tr) = traj.as_mut() {
            tr.push(t, level, &y);
        }
    }
    Ok((y, traj))
}
