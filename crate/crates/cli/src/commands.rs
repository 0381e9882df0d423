//! The five batch commands. Each writes its artifacts under the output
//! directory and returns a JSON summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use switchreach::nalgebra::DVector;
use switchreach::reach::{reachability_verdict, synthesize, verify, VerdictSettings, VerifySettings};
use switchreach::riccati::{below_lyapunov, check_convergence, solve_iterated, TerminalIndex};
use switchreach::simulate::{
    integrate_forward, integrate_y, sample_mode_path, ControlLaw, ModePath, OpenLoopFn, OptimalCompanion, Trajectory,
};
use switchreach::{HistoryIndex, SwitchedSystem};

use crate::config::{ControlConfig, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Riccati,
    Value,
    Synthesize,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Riccati => "riccati",
            Command::Value => "value",
            Command::Synthesize => "synthesize",
            Command::Verify => "verify",
        }
    }
}

/// Files written under one output directory.
pub struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    fn open(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let mut w = self.open(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> switchreach::Result<()>,
    {
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// The config actually used: system bounds filled in, output directory resolved.
pub fn effective_config(cfg: &RunConfig, sys: &SwitchedSystem, out: &Path) -> RunConfig {
    let mut eff = cfg.clone();
    eff.system = sys.effective_spec();
    eff.output.directory = out.to_path_buf();
    eff
}

/// Builds the system, writes `config.json` and runs `cmd`.
pub fn run(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> CliResult<Value> {
    let sys = cfg.build_system()?;
    let eff = effective_config(cfg, &sys, out_dir);
    let mut out = Output::create(out_dir)?;
    out.text("config.json", &eff.to_json())?;
    match cmd {
        Command::Simulate => cmd_simulate(&eff, &sys, &mut out),
        Command::Riccati => cmd_riccati(&eff, &sys, &mut out),
        Command::Value => cmd_value(&eff, &sys, &mut out),
        Command::Synthesize => cmd_synthesize(&eff, &sys, &mut out),
        Command::Verify => cmd_verify(&eff, &sys, &mut out),
    }
}

fn write_paths_csv<W: Write>(sys: &SwitchedSystem, paths: &[ModePath], mut w: W) -> switchreach::Result<()> {
    writeln!(w, "path,jump,t,mode")?;
    for p in paths {
        writeln!(w, "{},0,{:.16e},{}", p.path_index, 0.0, sys.modes().label(p.initial_mode))?;
        for (k, (t, m)) in p.times.iter().zip(&p.modes).enumerate() {
            writeln!(w, "{},{},{t:.16e},{}", p.path_index, k + 1, sys.modes().label(*m))?;
        }
    }
    Ok(())
}

fn trajectory_name(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:04}.csv")
}

pub fn cmd_simulate(cfg: &RunConfig, sys: &SwitchedSystem, out: &mut Output) -> CliResult<Value> {
    let sc = &cfg.simulate;
    let grid = cfg.grid(sc.steps)?;
    let n_weight = cfg.solver.n;
    let n = sys.state_dim();

    let syn = match sc.control {
        ControlConfig::Optimal => Some(synthesize(sys, cfg.solver_grid()?, n_weight, &cfg.target)?),
        _ => None,
    };
    let comp = match &syn {
        Some(s) => Some(s.companion(sys, grid)?),
        None => None,
    };
    let constant = match &sc.control {
        ControlConfig::Constant(u) => Some(DVector::from_column_slice(u)),
        _ => None,
    };
    let open_loop = constant.as_ref().map(|u| {
        let u = u.clone();
        move |_: usize, _: f64, _: Option<f64>| u.clone()
    });
    let law = match (&comp, &open_loop) {
        (Some(c), _) => ControlLaw::Optimal(c),
        (None, Some(f)) => ControlLaw::OpenLoop(f as &OpenLoopFn<'_>),
        _ => ControlLaw::Zero,
    };
    let x0: Vec<f64> = match (&sc.x0, &comp) {
        (Some(x0), _) => x0.clone(),
        (None, Some(c)) => c.initial_state().as_slice().to_vec(),
        (None, None) => vec![0.0; n],
    };

    let paths: Vec<ModePath> = (0..sc.paths as u64).map(|i| sample_mode_path(sys, cfg.mc.seed, i)).collect();
    out.csv("paths.csv", |w| write_paths_csv(sys, &paths, w))?;
    let mut summaries = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let run = integrate_forward(sys, p, &x0, &law, None, &grid, n_weight)?;
        out.csv(&trajectory_name("trajectory", i), |w| run.state.write_csv(w))?;
        summaries.push(json!({
            "path": p.path_index,
            "jump_times": p.times,
            "terminal_state": run.state.terminal(),
            "cost": run.cost,
        }));
    }
    let summary = json!({
        "command": "simulate",
        "seed": cfg.mc.seed,
        "steps": sc.steps,
        "control": sc.control,
        "x0": x0,
        "paths": summaries,
    });
    out.json("simulate.json", &summary)?;
    Ok(summary)
}

pub fn cmd_riccati(cfg: &RunConfig, sys: &SwitchedSystem, out: &mut Output) -> CliResult<Value> {
    let grid = cfg.solver_grid()?;
    let n_weight = cfg.solver.n;
    let ric = solve_iterated(sys, grid, n_weight, cfg.solver.m)?;
    out.csv("sigma.csv", |w| ric.write_sigma_csv(w))?;
    out.csv("theta.csv", |w| ric.write_theta_csv(w))?;

    let finite_ms: Vec<TerminalIndex> = cfg.solver.m_schedule.iter().copied().filter(|m| m.is_finite()).collect();
    let convergence = if finite_ms.is_empty() {
        None
    } else {
        let finite = finite_ms
            .iter()
            .map(|&m| solve_iterated(sys, grid, n_weight, m))
            .collect::<switchreach::Result<Vec<_>>>()?;
        let inf_owned;
        let inf = if ric.m.is_finite() {
            inf_owned = solve_iterated(sys, grid, n_weight, TerminalIndex::Infinite)?;
            &inf_owned
        } else {
            &ric
        };
        let refs: Vec<_> = finite.iter().collect();
        Some(check_convergence(&refs, inf))
    };
    let summary = json!({
        "command": "riccati",
        "n": n_weight,
        "m": ric.m,
        "steps": grid.steps(),
        "histories": ric.index().len(),
        "diagnostics": ric.diagnostics,
        "below_lyapunov": below_lyapunov(&ric),
        "convergence": convergence,
    });
    out.json("riccati.json", &summary)?;
    Ok(summary)
}

pub fn cmd_value(cfg: &RunConfig, sys: &SwitchedSystem, out: &mut Output) -> CliResult<Value> {
    let s = &cfg.solver;
    let settings = VerdictSettings {
        grid: cfg.solver_grid()?,
        n_schedule: s.n_schedule.clone(),
        m_schedule: s.m_schedule.clone(),
        epsilon: s.epsilon,
        lower_bounds_everywhere: s.lower_bounds_everywhere,
    };
    let report = reachability_verdict(sys, &cfg.target, &settings)?;
    out.csv("value.csv", |w| report.write_csv(w))?;
    let summary = json!({
        "command": "value",
        "verdict": report.verdict.to_string(),
        "report": report,
    });
    out.json("value.json", &summary)?;
    Ok(summary)
}

pub fn cmd_synthesize(cfg: &RunConfig, sys: &SwitchedSystem, out: &mut Output) -> CliResult<Value> {
    let n = sys.state_dim();
    let syn = synthesize(sys, cfg.solver_grid()?, cfg.solver.n, &cfg.target)?;
    let value = syn.value(sys)?;
    let comp = syn.companion(sys, cfg.grid(cfg.simulate.steps)?)?;
    let index = HistoryIndex::new(sys);
    let mut summaries = vec![];
    for i in 0..cfg.simulate.paths {
        let p = sample_mode_path(sys, cfg.mc.seed, i as u64);
        let (x, y) = integrate_y(&comp, &p)?;
        let ids = p.history_ids(&index);
        out.csv(&trajectory_name("control", i), |w| {
            write_control_trace(&comp, &ids, &x, &y, (n, sys.control_dim()), w)
        })?;
        let target = cfg.target.evaluate(sys, &p.seq(), &p.times);
        let gap = (DVector::from_column_slice(x.terminal()) - &target).amax();
        summaries.push(json!({
            "path": p.path_index,
            "jump_times": p.times,
            "terminal_state": x.terminal(),
            "target": target.as_slice(),
            "terminal_gap": gap,
        }));
    }
    let summary = json!({
        "command": "synthesize",
        "n": syn.n_weight,
        "value": value,
        "optimal_initial_state": comp.initial_state().as_slice(),
        "paths": summaries,
    });
    out.json("synthesis.json", &summary)?;
    Ok(summary)
}

fn write_control_trace<W: Write>(
    comp: &OptimalCompanion<'_>,
    ids: &[usize],
    x: &Trajectory,
    y: &Trajectory,
    dims: (usize, usize),
    mut w: W,
) -> switchreach::Result<()> {
    write!(w, "t,jumps")?;
    for k in 0..dims.0 {
        write!(w, ",x{k}")?;
    }
    for k in 0..dims.1 {
        write!(w, ",u{k}")?;
    }
    writeln!(w)?;
    for ((t, level, xv), (_, _, yv)) in x.samples().zip(y.samples()) {
        let u = comp.control(ids[level], t, yv)?;
        write!(w, "{t:.16e},{level}")?;
        for v in xv.iter().chain(u.iter()) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn cmd_verify(cfg: &RunConfig, sys: &SwitchedSystem, out: &mut Output) -> CliResult<Value> {
    let mc = &cfg.mc;
    let settings = VerifySettings {
        paths: mc.paths,
        seed: mc.seed,
        mc_steps: mc.steps,
        gap_paths: mc.gap_paths,
        gap_steps: mc.gap_steps,
    };
    let report = verify(sys, cfg.solver_grid()?, cfg.solver.n, &cfg.target, &settings)?;
    let summary = json!({
        "command": "verify",
        "report": report,
    });
    out.json("verify.json", &summary)?;
    Ok(summary)
}
