//! Optimal control synthesis and its Monte Carlo verification.

use serde::Serialize;

use crate::error::Result;
use crate::model::SwitchedSystem;
use crate::reach::value::value_from_riccati;
use crate::riccati::{solve_iterated, RiccatiSolution, TerminalIndex};
use crate::simulate::{mc_cost, ControlLaw, McReport, McSettings, OptimalCompanion};
use crate::structure::TimeGrid;
use crate::target::TargetSpec;

/// `M = inf` Riccati solution from which `u* = -N B^T Y` is built.
pub struct Synthesis {
    pub n_weight: f64,
    pub ric: RiccatiSolution,
    pub xi: TargetSpec,
}

pub fn synthesize(sys: &SwitchedSystem, grid: TimeGrid, n_weight: f64, xi: &TargetSpec) -> Result<Synthesis> {
    xi.check(sys)?;
    let ric = solve_iterated(sys, grid, n_weight, TerminalIndex::Infinite)?;
    Ok(Synthesis { n_weight, ric, xi: xi.clone() })
}

impl Synthesis {
    /// Companion tabulated on `mc_grid`, ready for path-wise integration.
    pub fn companion<'a>(&'a self, sys: &'a SwitchedSystem, mc_grid: TimeGrid) -> Result<OptimalCompanion<'a>> {
        OptimalCompanion::new(sys, &self.ric, &self.xi, mc_grid)
    }

    pub fn value(&self, sys: &SwitchedSystem) -> Result<f64> {
        value_from_riccati(sys, &self.ric, &self.xi)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifySettings {
    pub paths: usize,
    pub seed: u64,
    pub mc_steps: usize,
    pub gap_paths: usize,
    pub gap_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TerminalGap {
    pub paths: usize,
    pub steps: usize,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub n: f64,
    pub value: f64,
    pub optimal_initial_state: Vec<f64>,
    pub mc: McReport,
    pub deviation_in_std_errors: f64,
    pub agrees_within_3_std_errors: bool,
    pub terminal_gap: TerminalGap,
}

fn deviation(estimate: f64, std_error: f64, value: f64) -> f64 {
    let diff = (estimate - value).abs();
    if std_error > 0.0 {
        diff / std_error
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares the Monte Carlo cost of `u*` with `V^N` and measures
/// `max |X_T - xi|` on a separate fine-grid batch.
pub fn verify(
    sys: &SwitchedSystem,
    grid: TimeGrid,
    n_weight: f64,
    xi: &TargetSpec,
    settings: &VerifySettings,
) -> Result<VerifyReport> {
    let syn = synthesize(sys, grid, n_weight, xi)?;
    let value = syn.value(sys)?;
    let horizon = sys.horizon();

    let comp = syn.companion(sys, TimeGrid::new(0.0, horizon, settings.mc_steps)?)?;
    let x0 = comp.initial_state().as_slice().to_vec();
    let mc = mc_cost(
        sys,
        n_weight,
        Some(xi),
        &x0,
        &ControlLaw::Optimal(&comp),
        None,
        comp.grid(),
        McSettings { paths: settings.paths, seed: settings.seed },
    )?;

    let fine = syn.companion(sys, TimeGrid::new(0.0, horizon, settings.gap_steps)?)?;
    let gap = mc_cost(
        sys,
        n_weight,
        Some(xi),
        &x0,
        &ControlLaw::Optimal(&fine),
        None,
        fine.grid(),
        McSettings { paths: settings.gap_paths, seed: settings.seed },
    )?;

    let dev = deviation(mc.cost.mean, mc.cost.std_error, value);
    Ok(VerifyReport {
        n: n_weight,
        value,
        optimal_initial_state: x0,
        deviation_in_std_errors: dev,
        agrees_within_3_std_errors: dev <= 3.0,
        mc,
        terminal_gap: TerminalGap {
            paths: settings.gap_paths,
            steps: settings.gap_steps,
            max: gap.max_terminal_gap.unwrap_or(0.0),
            mean: gap.mean_terminal_gap.unwrap_or(0.0),
        },
    })
}
