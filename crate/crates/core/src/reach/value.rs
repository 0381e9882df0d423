//! Penalized values `V^N`, finite-`M` lower bounds and verdicts.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bsde::{martingale_representation, solve_eta_zeta, EtaZetaSpec, Solved};
use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::reach::quadrature::quadratic_functional;
use crate::riccati::{solve_iterated, RiccatiSolution, TerminalIndex};
use crate::structure::TimeGrid;
use crate::target::TargetSpec;

pub const DEFAULT_N_SCHEDULE: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10000.0];
pub const DEFAULT_M_SCHEDULE: [TerminalIndex; 6] = [
    TerminalIndex::Finite(1.0),
    TerminalIndex::Finite(2.0),
    TerminalIndex::Finite(4.0),
    TerminalIndex::Finite(8.0),
    TerminalIndex::Finite(16.0),
    TerminalIndex::Infinite,
];

/// `E int <(I + Sigma + Theta) zeta, zeta> q^` for a solved `(eta, zeta)`.
pub fn riccati_functional(solved: &Solved<EtaZetaSpec<'_>>) -> Result<f64> {
    let ric = solved.spec.ric;
    let n = ric.dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let weight = |h: usize, t: f64, mark: usize| &eye + ric.sigma_next(h, t, mark);
    quadratic_functional(solved, &weight)
}

/// `E int <(I + Sigma^M + Theta^M) zeta^M, zeta^M> q^` from a solved
/// Riccati family.
pub fn value_from_riccati(sys: &SwitchedSystem, ric: &RiccatiSolution, xi: &TargetSpec) -> Result<f64> {
    let solved = solve_eta_zeta(sys, ric, xi)?;
    riccati_functional(&solved)
}

/// `V^N` (with `M = inf`) or the finite-`M` lower bound.
pub fn value_vn(sys: &SwitchedSystem, grid: TimeGrid, n_weight: f64, xi: &TargetSpec, m: TerminalIndex) -> Result<f64> {
    let ric = solve_iterated(sys, grid, n_weight, m)?;
    value_from_riccati(sys, &ric, xi)
}

/// `(E xi, E |xi|^2)`.
pub fn target_moments(sys: &SwitchedSystem, grid: TimeGrid, xi: &TargetSpec) -> Result<(Vec<f64>, f64)> {
    let (mean, solved) = martingale_representation(sys, xi, grid)?;
    let n = sys.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let var = quadratic_functional(&solved, &|_, _, _| eye.clone())?;
    Ok((mean.as_slice().to_vec(), mean.norm_squared() + var))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Reachable,
    NotReachable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Reachable => "REACHABLE",
            Verdict::NotReachable => "NOT-REACHABLE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBound {
    pub m: TerminalIndex,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleEntry {
    pub n: f64,
    pub value: f64,
    pub lower_bounds: Vec<LowerBound>,
}

#[derive(Clone, Debug, Serialize)]
pub struct McCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    pub deviation_in_std_errors: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundChecks {
    pub nonnegative: bool,
    pub non_increasing_in_n: bool,
    pub lower_bounds_below_value: bool,
    pub lower_bounds_increasing_in_m: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueReport {
    pub epsilon: f64,
    pub target_mean: Vec<f64>,
    pub target_second_moment: f64,
    pub schedule: Vec<ScheduleEntry>,
    pub inf_value: f64,
    /// Largest finite-`M` lower bound at the largest `N`.
    pub certified_lower_bound: f64,
    pub verdict: Verdict,
    pub checks: BoundChecks,
    pub mc: Option<McCheck>,
}

impl ValueReport {
    /// `n,value,lower_bound` per schedule entry.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,value,lower_bound")?;
        for e in &self.schedule {
            let lb = e.lower_bounds.iter().map(|b| b.value).fold(f64::NEG_INFINITY, f64::max);
            let lb = if lb.is_finite() { format!("{lb:.16e}") } else { String::new() };
            writeln!(w, "{:.16e},{:.16e},{}", e.n, e.value, lb)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VerdictSettings {
    pub grid: TimeGrid,
    pub n_schedule: Vec<f64>,
    pub m_schedule: Vec<TerminalIndex>,
    /// Defaults to `1e-3 (1 + E |xi|^2)`.
    pub epsilon: Option<f64>,
    /// Finite-`M` bounds at every `N` rather than only the largest.
    pub lower_bounds_everywhere: bool,
}

impl VerdictSettings {
    pub fn new(grid: TimeGrid) -> Self {
        Self {
            grid,
            n_schedule: DEFAULT_N_SCHEDULE.to_vec(),
            m_schedule: DEFAULT_M_SCHEDULE.to_vec(),
            epsilon: None,
            lower_bounds_everywhere: false,
        }
    }
}

const CHECK_TOL: f64 = 1e-9;

pub fn reachability_verdict(sys: &SwitchedSystem, xi: &TargetSpec, settings: &VerdictSettings) -> Result<ValueReport> {
    let ns = &settings.n_schedule;
    if ns.is_empty() {
        return Err(Error::Config("empty N-schedule".into()));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] <= 0.0 {
        return Err(Error::Config("N-schedule must be positive and strictly increasing".into()));
    }
    xi.check(sys)?;
    let (target_mean, second) = target_moments(sys, settings.grid, xi)?;
    let epsilon = settings.epsilon.unwrap_or(1e-3 * (1.0 + second));
    let finite_ms: Vec<TerminalIndex> = settings.m_schedule.iter().copied().filter(|m| m.is_finite()).collect();

    let mut schedule = Vec::with_capacity(ns.len());
    for (k, &n) in ns.iter().enumerate() {
        let value = value_vn(sys, settings.grid, n, xi, TerminalIndex::Infinite)?;
        let lower_bounds = if settings.lower_bounds_everywhere || k + 1 == ns.len() {
            finite_ms
                .iter()
                .map(|&m| Ok(LowerBound { m, value: value_vn(sys, settings.grid, n, xi, m)? }))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![]
        };
        schedule.push(ScheduleEntry { n, value, lower_bounds });
    }

    let slack = |v: f64| CHECK_TOL * (1.0 + v.abs());
    let checks = BoundChecks {
        nonnegative: schedule.iter().all(|e| e.value >= -slack(0.0)),
        non_increasing_in_n: schedule.windows(2).all(|w| w[1].value <= w[0].value + slack(w[0].value)),
        lower_bounds_below_value: schedule
            .iter()
            .all(|e| e.lower_bounds.iter().all(|b| b.value <= e.value + slack(e.value))),
        lower_bounds_increasing_in_m: schedule
            .iter()
            .all(|e| e.lower_bounds.windows(2).all(|w| w[1].value >= w[0].value - slack(w[0].value))),
    };
    let inf_value = schedule.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    let certified_lower_bound =
        schedule.last().expect("non-empty schedule").lower_bounds.iter().map(|b| b.value).fold(0.0, f64::max);
    let verdict = if inf_value <= epsilon {
        Verdict::Reachable
    } else if certified_lower_bound > epsilon {
        Verdict::NotReachable
    } else {
        Verdict::Inconclusive
    };
    Ok(ValueReport {
        epsilon,
        target_mean,
        target_second_moment: second,
        schedule,
        inf_value,
        certified_lower_bound,
        verdict,
        checks,
        mc: None,
    })
}
