//! Sampling of the mode process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::SwitchedSystem;
use crate::structure::HistoryIndex;

/// Number of nodes of the cumulative-hazard table used to invert
/// time-dependent intensities.
pub const HAZARD_TABLE_POINTS: usize = 2001;

/// Realized jumps of the mode process on `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModePath {
    pub seed: u64,
    pub path_index: u64,
    pub initial_mode: usize,
    /// `T_1 < ... < T_k`, `k <= J`.
    pub times: Vec<f64>,
    /// Post-jump modes `gamma_1, ..., gamma_k`.
    pub modes: Vec<usize>,
}

impl ModePath {
    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn first_jump_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    /// Visited modes, starting with the initial one.
    pub fn seq(&self) -> Vec<usize> {
        std::iter::once(self.initial_mode).chain(self.modes.iter().copied()).collect()
    }

    /// Number of jumps in `[0, t]`.
    pub fn jumps_until(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// History id after `k` jumps.
    pub fn history_ids(&self, index: &HistoryIndex) -> Vec<usize> {
        let mut ids = vec![0];
        for &m in &self.modes {
            let last = *ids.last().unwrap();
            ids.push(index.child(last, m).expect("sampled path stays within the jump cap"));
        }
        ids
    }
}

/// Independent stream for path `path_index` under master seed `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Solves `int_from^tau lambda(mode, r) dr = target` for `tau <= T`.
fn invert_hazard(sys: &SwitchedSystem, mode: usize, from: f64, target: f64) -> Option<f64> {
    let intensity = sys.intensity();
    let horizon = sys.horizon();
    if intensity.is_time_homogeneous() {
        let rate = intensity.rate(mode, from);
        if rate <= 0.0 {
            return None;
        }
        let tau = from + target / rate;
        return (tau <= horizon).then_some(tau);
    }
    if intensity.cumulative(mode, from, horizon) < target {
        return None;
    }
    let n = HAZARD_TABLE_POINTS - 1;
    let dt = (horizon - from) / n as f64;
    let mut prev = 0.0;
    for i in 1..=n {
        let t = from + i as f64 * dt;
        let cum = intensity.cumulative(mode, from, t);
        if cum >= target {
            let (mut lo, mut hi) = (t - dt, t);
            let mut tau = lo + dt * (target - prev) / (cum - prev).max(f64::MIN_POSITIVE);
            for _ in 0..60 {
                if intensity.cumulative(mode, from, tau) < target {
                    lo = tau;
                } else {
                    hi = tau;
                }
                tau = 0.5 * (lo + hi);
                if hi - lo < 1e-15 {
                    break;
                }
            }
            return Some(tau);
        }
        prev = cum;
    }
    None
}

fn sample_with(sys: &SwitchedSystem, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let mut times = vec![];
    let mut modes = vec![];
    let mut mode = sys.initial_mode();
    let mut t = 0.0;
    while times.len() < sys.max_jumps() {
        let e = -(1.0 - rng.gen::<f64>()).ln();
        let Some(tau) = invert_hazard(sys, mode, t, e) else { break };
        let weights = sys.kernel_weights(mode, tau);
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut next = weights.iter().rposition(|&w| w > 0.0).expect("kernel with positive mass");
        for (m, w) in weights.iter().enumerate() {
            if *w > 0.0 && u < *w {
                next = m;
                break;
            }
            u -= w;
        }
        times.push(tau);
        modes.push(next);
        mode = next;
        t = tau;
    }
    (times, modes)
}

pub fn sample_mode_path(sys: &SwitchedSystem, seed: u64, path_index: u64) -> ModePath {
    let mut rng = path_rng(seed, path_index);
    let (times, modes) = sample_with(sys, &mut rng);
    ModePath { seed, path_index, initial_mode: sys.initial_mode(), times, modes }
}

pub fn sample_mode_paths(sys: &SwitchedSystem, seed: u64, count: usize) -> Vec<ModePath> {
    (0..count as u64).into_par_iter().map(|i| sample_mode_path(sys, seed, i)).collect()
}

/// Kolmogorov–Smirnov distance between the empirical law of `T_1 ∧ T` over
/// `count` paths and `1 - exp(-int_0^t lambda(gamma_0))` on `[0, T]`.
pub fn first_jump_ks_statistic(sys: &SwitchedSystem, seed: u64, count: usize) -> f64 {
    let mut t1: Vec<f64> = sample_mode_paths(sys, seed, count).iter().filter_map(|p| p.first_jump_time()).collect();
    t1.sort_by(|a, b| a.total_cmp(b));
    let g0 = sys.initial_mode();
    let cdf = |t: f64| 1.0 - (-sys.intensity().cumulative(g0, 0.0, t)).exp();
    let n = count as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in t1.iter().enumerate() {
        let f = cdf(t);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d.max((cdf(sys.horizon()) - t1.len() as f64 / n).abs())
}
