//! Mode-path sampling, forward integration along paths and Monte Carlo
//! cost estimates.

pub mod integrate;
pub mod models;
pub mod path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::structure::{HistoryIndex, TimeGrid};
use crate::target::TargetSpec;

pub use integrate::{integrate_path, CoefficientTable, PathSystem, Point, StageContext, Trajectory};
pub use models::{ControlLaw, FiniteCompanion, ForwardModel, OpenLoopFn, OptimalCompanion, ZFn};
pub use path::{first_jump_ks_statistic, path_rng, sample_mode_path, sample_mode_paths, ModePath};

fn with_context(path: &ModePath, e: Error) -> Error {
    let msg = format!("path {} (seed {}, jumps {:?}): {e}", path.path_index, path.seed, path.times);
    match e {
        Error::Numerical(_) => Error::Numerical(msg),
        _ => Error::Domain(msg),
    }
}

/// State trajectory and final running cost of one controlled path.
#[derive(Clone, Debug)]
pub struct ForwardRun {
    pub state: Trajectory,
    pub cost: f64,
}

/// Integrates the controlled state along `path`. With the optimal law the
/// second component is the optimal one and `z` is ignored.
pub fn integrate_forward(
    sys: &SwitchedSystem,
    path: &ModePath,
    x0: &[f64],
    law: &ControlLaw<'_>,
    z: Option<&ZFn<'_>>,
    grid: &TimeGrid,
    n_weight: f64,
) -> Result<ForwardRun> {
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(Error::Shape(format!("initial state of length {} for dimension {n}", x0.len())));
    }
    let index = HistoryIndex::new(sys);
    let run = match law {
        ControlLaw::Optimal(comp) => {
            let mut y0 = comp.initial_state().clone();
            y0.copy_from(&DVector::from_column_slice(x0));
            let (end, traj) = run_companion(comp, &index, path, Some(2 * n), Some(&y0))?;
            ForwardRun { state: traj.expect("recorded").project(0..n), cost: end[2 * n] }
        }
        _ => {
            let control = match law {
                ControlLaw::OpenLoop(u) => Some(*u),
                _ => None,
            };
            let model = ForwardModel {
                sys,
                index: &index,
                x0: DVector::from_column_slice(x0),
                control,
                z,
                control_weight: 1.0 / n_weight,
            };
            let (end, traj) =
                integrate_path(&model, &index, grid, None, path, Some(n)).map_err(|e| with_context(path, e))?;
            ForwardRun { state: traj.expect("recorded"), cost: end[n] }
        }
    };
    Ok(run)
}

fn run_companion(
    comp: &OptimalCompanion<'_>,
    index: &HistoryIndex,
    path: &ModePath,
    record: Option<usize>,
    x0: Option<&DVector<f64>>,
) -> Result<(Vec<f64>, Option<Trajectory>)> {
    let res = match x0 {
        Some(x0) if x0 != comp.initial_state() => {
            let shifted = ShiftedStart { inner: comp, x0 };
            integrate_path(&shifted, index, comp.grid(), comp.table(), path, record)
        }
        _ => integrate_path(comp, index, comp.grid(), comp.table(), path, record),
    };
    res.map_err(|e| with_context(path, e))
}

/// Companion with a user-supplied initial state.
struct ShiftedStart<'c, 'a> {
    inner: &'c OptimalCompanion<'a>,
    x0: &'c DVector<f64>,
}

impl PathSystem for ShiftedStart<'_, '_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn coeff_len(&self) -> usize {
        self.inner.coeff_len()
    }
    fn coeffs_at(&self, h: usize, t: f64, out: &mut [f64]) -> Result<()> {
        self.inner.coeffs_at(h, t, out)
    }
    fn initial(&self, path: &ModePath) -> Result<Vec<f64>> {
        let mut y = self.inner.initial(path)?;
        y[..self.x0.len()].copy_from_slice(self.x0.as_slice());
        Ok(y)
    }
    fn rhs(&self, ctx: &StageContext, co: &[f64], y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.inner.rhs(ctx, co, y, dy)
    }
    fn jump(&self, ctx: &StageContext, mark: usize, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.jump(ctx, mark, y, out)
    }
}

/// `(X, Y)` of the optimal companion along `path`, from `X_0 = -eta_0`.
pub fn integrate_y(comp: &OptimalCompanion<'_>, path: &ModePath) -> Result<(Trajectory, Trajectory)> {
    let n = comp.initial_state().len();
    let index = comp.riccati().index();
    let (_, traj) = run_companion(comp, index, path, Some(2 * n), None)?;
    let traj = traj.expect("recorded");
    Ok((traj.project(0..n), traj.project(n..2 * n)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl Estimate {
    /// Mean and standard error, accumulated in the given order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n as f64).sqrt(), paths: n }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub cost: Estimate,
    /// `max |X_T - xi|` over the paths, when a target is given.
    pub max_terminal_gap: Option<f64>,
    pub mean_terminal_gap: Option<f64>,
    /// Monte Carlo estimate of `E int |u|^2`.
    pub control_energy: Estimate,
}

#[derive(Clone, Copy, Debug)]
pub struct McSettings {
    pub paths: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of `(1/N) E int |u|^2 + E int sum r |Z|^2`.
#[allow(clippy::too_many_arguments)]
pub fn mc_cost(
    sys: &SwitchedSystem,
    n_weight: f64,
    xi: Option<&TargetSpec>,
    x0: &[f64],
    law: &ControlLaw<'_>,
    z: Option<&ZFn<'_>>,
    grid: &TimeGrid,
    settings: McSettings,
) -> Result<McReport> {
    if settings.paths == 0 {
        return Err(Error::Config("Monte Carlo needs at least one path".into()));
    }
    let n = sys.state_dim();
    let index = HistoryIndex::new(sys);
    let x0v = DVector::from_column_slice(x0);
    let control = match law {
        ControlLaw::OpenLoop(u) => Some(*u),
        _ => None,
    };
    let forward = ForwardModel { sys, index: &index, x0: x0v.clone(), control, z, control_weight: 1.0 / n_weight };
    let forward_table = match law {
        ControlLaw::Optimal(_) => None,
        _ => Some(CoefficientTable::build(&forward, index.len(), grid)?),
    };
    let outcomes: Vec<(f64, f64, f64)> = (0..settings.paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_mode_path(sys, settings.seed, i);
            let (end, energy) = match law {
                ControlLaw::Optimal(comp) => {
                    let (end, _) = run_companion(comp, &index, &path, None, Some(&x0v))?;
                    (end[..n].to_vec(), (end[2 * n], end[2 * n + 1]))
                }
                _ => {
                    let (end, _) = integrate_path(&forward, &index, grid, forward_table.as_ref(), &path, None)
                        .map_err(|e| with_context(&path, e))?;
                    (end[..n].to_vec(), (end[n], end[n + 1]))
                }
            };
            let gap = match xi {
                Some(xi) => {
                    let target = xi.evaluate(sys, &path.seq(), &path.times);
                    (DVector::from_vec(end) - target).amax()
                }
                None => f64::NAN,
            };
            Ok((energy.0, energy.1, gap))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let energies: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let gaps = xi.map(|_| outcomes.iter().map(|o| o.2).collect::<Vec<_>>());
    let control_energy = Estimate::from_samples(&energies);
    Ok(McReport {
        cost: Estimate::from_samples(&costs),
        max_terminal_gap: gaps.as_ref().map(|g| g.iter().copied().fold(0.0, f64::max)),
        mean_terminal_gap: gaps.as_ref().map(|g| g.iter().sum::<f64>() / g.len() as f64),
        control_energy,
    })
}
