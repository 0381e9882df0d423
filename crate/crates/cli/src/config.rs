//! Run configuration: one JSON document per run, every default materialized.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switchreach::reach::value::{DEFAULT_M_SCHEDULE, DEFAULT_N_SCHEDULE};
use switchreach::riccati::TerminalIndex;
use switchreach::{SwitchedSystem, SystemSpec, TargetSpec, TimeGrid};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Step of the backward grid on `[0, T]`.
    pub h: f64,
    /// Penalization weight used by `riccati`, `synthesize` and `verify`.
    pub n: f64,
    /// Terminal index used by `riccati`.
    pub m: TerminalIndex,
    pub n_schedule: Vec<f64>,
    pub m_schedule: Vec<TerminalIndex>,
    /// Reachability tolerance; `1e-3 (1 + E |xi|^2)` when absent.
    pub epsilon: Option<f64>,
    pub lower_bounds_everywhere: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 5e-4,
            n: 10.0,
            m: TerminalIndex::Infinite,
            n_schedule: DEFAULT_N_SCHEDULE.to_vec(),
            m_schedule: DEFAULT_M_SCHEDULE.to_vec(),
            epsilon: None,
            lower_bounds_everywhere: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// Steps of the Monte Carlo cost grid.
    pub steps: usize,
    /// Paths and steps of the fine terminal-gap batch.
    pub gap_paths: usize,
    pub gap_steps: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 10_000, seed: 0, steps: 250, gap_paths: 1000, gap_steps: 4000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlConfig {
    Zero,
    Optimal,
    Constant(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Paths written as trajectory files.
    pub paths: usize,
    pub steps: usize,
    /// Initial state; zero, or the optimal one under the optimal law.
    pub x0: Option<Vec<f64>>,
    pub control: ControlConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { paths: 10, steps: 1000, x0: None, control: ControlConfig::Zero }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn new(system: SystemSpec, target: TargetSpec) -> Self {
        Self {
            system,
            target,
            solver: SolverConfig::default(),
            mc: McConfig::default(),
            simulate: SimulateConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parses and validates; errors carry the line and column.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Effective configuration, pretty-printed with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> CliResult<()> {
        let s = &self.solver;
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(s.h > 0.0 && s.h.is_finite()) {
            return bad(format!("solver.h must be positive, got {}", s.h));
        }
        if !(s.n > 0.0 && s.n.is_finite()) {
            return bad(format!("solver.n must be positive, got {}", s.n));
        }
        if s.n_schedule.is_empty() || s.n_schedule[0] <= 0.0 || s.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("solver.n_schedule must be positive and strictly increasing".into());
        }
        if let Some(eps) = s.epsilon {
            if !(eps > 0.0) {
                return bad(format!("solver.epsilon must be positive, got {eps}"));
            }
        }
        if self.mc.paths == 0 || self.mc.gap_paths == 0 {
            return bad("mc.paths and mc.gap_paths must be positive".into());
        }
        if self.mc.steps == 0 || self.mc.gap_steps == 0 || self.simulate.steps == 0 {
            return bad("step counts must be positive".into());
        }
        if let ControlConfig::Constant(u) = &self.simulate.control {
            if u.len() != self.system.control_dim {
                return bad(format!(
                    "simulate.control has length {} for control dimension {}",
                    u.len(),
                    self.system.control_dim
                ));
            }
        }
        if let Some(x0) = &self.simulate.x0 {
            if x0.len() != self.system.state_dim {
                return bad(format!(
                    "simulate.x0 has length {} for state dimension {}",
                    x0.len(),
                    self.system.state_dim
                ));
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> CliResult<SwitchedSystem> {
        let sys = SwitchedSystem::new(self.system.clone()).map_err(CliError::config_from)?;
        let report = sys.validate();
        if !report.passed() {
            let failed: Vec<String> = report.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            return Err(CliError::Config(format!("system fails validation: {}", failed.join("; "))));
        }
        self.target.check(&sys).map_err(CliError::config_from)?;
        Ok(sys)
    }

    pub fn solver_grid(&self) -> CliResult<TimeGrid> {
        TimeGrid::with_step(0.0, self.system.horizon, self.solver.h).map_err(CliError::config_from)
    }

    pub fn grid(&self, steps: usize) -> CliResult<TimeGrid> {
        TimeGrid::new(0.0, self.system.horizon, steps).map_err(CliError::config_from)
    }
}
