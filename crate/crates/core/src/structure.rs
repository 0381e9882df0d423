//! Jump-history bookkeeping: mode sequences, their enumeration up to the
//! jump cap, time grids and history-indexed fields.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::hermite_into;
use crate::model::SwitchedSystem;

/// Default number of grid steps on `[0, T]`.
pub const DEFAULT_STEPS: usize = 2000;

/// A mode sequence `(g0, ..., gj)`, optionally with jump times
/// `(0, t1, ..., tj)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeHistory {
    seq: Vec<usize>,
    times: Option<Vec<f64>>,
}

impl ModeHistory {
    pub fn root(mode: usize) -> Self {
        Self { seq: vec![mode], times: None }
    }

    pub fn root_timed(mode: usize) -> Self {
        Self { seq: vec![mode], times: Some(vec![0.0]) }
    }

    pub fn new(seq: Vec<usize>, times: Option<Vec<f64>>) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::Domain("empty mode sequence".into()));
        }
        if seq.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("fictive jump in {seq:?}")));
        }
        if let Some(ts) = &times {
            if ts.len() != seq.len() || ts[0] != 0.0 {
                return Err(Error::Domain("jump times must be (0, t1, ..., tj)".into()));
            }
            if ts.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain(format!("jump times not increasing: {ts:?}")));
            }
        }
        Ok(Self { seq, times })
    }

    pub fn seq(&self) -> &[usize] {
        &self.seq
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    /// Number of jumps `|e|`.
    pub fn level(&self) -> usize {
        self.seq.len() - 1
    }

    pub fn last_mode(&self) -> usize {
        *self.seq.last().unwrap()
    }

    /// `t_{|e|}`, or 0 for untimed histories.
    pub fn last_jump_time(&self) -> f64 {
        self.times.as_ref().map_or(0.0, |ts| *ts.last().unwrap())
    }

    pub fn first_jump_time(&self) -> Option<f64> {
        self.times.as_ref().and_then(|ts| ts.get(1).copied())
    }

    /// `e ⊕ (t, theta)`.
    pub fn concat(&self, t: f64, theta: usize) -> Result<Self> {
        if theta == self.last_mode() {
            return Err(Error::Domain(format!("fictive jump {theta} -> {theta} at t = {t}")));
        }
        let mut seq = self.seq.clone();
        seq.push(theta);
        let times = match &self.times {
            None => None,
            Some(ts) => {
                if t <= *ts.last().unwrap() {
                    return Err(Error::Domain(format!("jump time {t} precedes the last jump {}", ts.last().unwrap())));
                }
                let mut ts = ts.clone();
                ts.push(t);
                Some(ts)
            }
        };
        Ok(Self { seq, times })
    }
}

/// Every no-fictive-jump sequence from the initial mode with at most
/// `max_jumps` jumps, length-major then lexicographic.
pub fn enumerate_sequences(mode_count: usize, gamma0: usize, max_jumps: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![gamma0]];
    let mut frontier = 0..1;
    for _ in 0..max_jumps {
        let start = out.len();
        for i in frontier.clone() {
            let last = *out[i].last().unwrap();
            for theta in 0..mode_count {
                if theta != last {
                    let mut s = out[i].clone();
                    s.push(theta);
                    out.push(s);
                }
            }
        }
        frontier = start..out.len();
    }
    out
}

pub fn enumerate_histories(sys: &SwitchedSystem) -> Vec<ModeHistory> {
    enumerate_sequences(sys.mode_count(), sys.initial_mode(), sys.max_jumps())
        .into_iter()
        .map(|seq| ModeHistory { seq, times: None })
        .collect()
}

/// Enumerated histories with parent/child links.
#[derive(Clone, Debug)]
pub struct HistoryIndex {
    seqs: Vec<Vec<usize>>,
    children: Vec<Vec<Option<usize>>>,
    parent: Vec<Option<usize>>,
    by_level: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    mode_count: usize,
    max_jumps: usize,
}

impl HistoryIndex {
    pub fn new(sys: &SwitchedSystem) -> Self {
        Self::from_parts(sys.mode_count(), sys.initial_mode(), sys.max_jumps())
    }

    pub fn from_parts(mode_count: usize, gamma0: usize, max_jumps: usize) -> Self {
        let seqs = enumerate_sequences(mode_count, gamma0, max_jumps);
        let lookup: HashMap<_, _> = seqs.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut children = vec![vec![None; mode_count]; seqs.len()];
        let mut parent = vec![None; seqs.len()];
        let mut by_level = vec![vec![]; max_jumps + 1];
        for (id, s) in seqs.iter().enumerate() {
            by_level[s.len() - 1].push(id);
            if s.len() > 1 {
                let p = lookup[&s[..s.len() - 1]];
                parent[id] = Some(p);
                children[p][*s.last().unwrap()] = Some(id);
            }
        }
        Self { seqs, children, parent, by_level, lookup, mode_count, max_jumps }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn max_jumps(&self) -> usize {
        self.max_jumps
    }

    pub fn seq(&self, id: usize) -> &[usize] {
        &self.seqs[id]
    }

    pub fn level(&self, id: usize) -> usize {
        self.seqs[id].len() - 1
    }

    pub fn child(&self, id: usize, mark: usize) -> Option<usize> {
        self.children[id][mark]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id]
    }

    pub fn level_ids(&self, level: usize) -> &[usize] {
        &self.by_level[level]
    }

    pub fn id_of(&self, seq: &[usize]) -> Option<usize> {
        self.lookup.get(seq).copied()
    }

    pub fn lookup(&self, e: &ModeHistory) -> Result<usize> {
        self.id_of(e.seq()).ok_or_else(|| Error::UnknownHistory(e.seq().to_vec()))
    }

    pub fn label(&self, id: usize) -> String {
        self.seqs[id].iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-")
    }
}

/// Uniform partition of `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Config(format!("invalid grid [{start}, {end}] with {steps} steps")));
        }
        Ok(Self { start, end, steps })
    }

    /// Grid whose step is the closest to `h` that divides the interval.
    pub fn with_step(start: f64, end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        let steps = ((end - start) / h).round().max(1.0) as usize;
        Self::new(start, end, steps)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.end
        } else {
            self.start + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// Interval `k` with `node(k) <= t <= node(k+1)`, clamped to the grid.
    pub fn locate(&self, t: f64) -> usize {
        let k = ((t - self.start) / self.h()).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.steps - 1)
        }
    }

    pub fn refined(&self) -> Self {
        Self { steps: 2 * self.steps, ..*self }
    }
}

/// Matrix-valued function of `(history, t)` stored on a shared grid, with
/// optional time derivatives for cubic Hermite readout.
#[derive(Clone, Debug)]
pub struct HistoryField {
    grid: TimeGrid,
    rows: usize,
    cols: usize,
    histories: usize,
    values: Vec<f64>,
    slopes: Option<Vec<f64>>,
}

impl HistoryField {
    pub fn zeros(grid: TimeGrid, histories: usize, rows: usize, cols: usize) -> Self {
        Self { grid, rows, cols, histories, values: vec![0.0; histories * grid.len() * rows * cols], slopes: None }
    }

    pub fn with_slopes(mut self) -> Self {
        self.slopes = Some(vec![0.0; self.values.len()]);
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn histories(&self) -> usize {
        self.histories
    }

    pub fn has_slopes(&self) -> bool {
        self.slopes.is_some()
    }

    fn offset(&self, h: usize, i: usize) -> usize {
        (h * self.grid.len() + i) * self.rows * self.cols
    }

    /// Column-major values at node `i` of history `h`.
    pub fn node_slice(&self, h: usize, i: usize) -> &[f64] {
        let o = self.offset(h, i);
        &self.values[o..o + self.rows * self.cols]
    }

    pub fn node_slice_mut(&mut self, h: usize, i: usize) -> &mut [f64] {
        let o = self.offset(h, i);
        let len = self.rows * self.cols;
        &mut self.values[o..o + len]
    }

    pub fn slope_slice_mut(&mut self, h: usize, i: usize) -> &mut [f64] {
        let o = self.offset(h, i);
        let len = self.rows * self.cols;
        &mut self.slopes.as_mut().expect("field without slopes")[o..o + len]
    }

    /// Whole time series of history `h`, nodes consecutive.
    pub fn history_slice(&self, h: usize) -> &[f64] {
        let o = self.offset(h, 0);
        &self.values[o..o + self.grid.len() * self.rows * self.cols]
    }

    pub fn history_slice_mut(&mut self, h: usize) -> &mut [f64] {
        let o = self.offset(h, 0);
        let len = self.grid.len() * self.rows * self.cols;
        &mut self.values[o..o + len]
    }

    /// Values and slopes of history `h` for bulk writes.
    pub fn history_parts_mut(&mut self, h: usize) -> (&mut [f64], Option<&mut [f64]>) {
        let o = self.offset(h, 0);
        let len = self.grid.len() * self.rows * self.cols;
        let v = &mut self.values[o..o + len];
        let s = self.slopes.as_mut().map(|s| &mut s[o..o + len]);
        (v, s)
    }

    pub fn node(&self, h: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, self.node_slice(h, i))
    }

    pub fn set_node(&mut self, h: usize, i: usize, m: &DMatrix<f64>) {
        self.node_slice_mut(h, i).copy_from_slice(m.as_slice());
    }

    /// Linear interpolation between nodes.
    pub fn eval_into(&self, h: usize, t: f64, out: &mut [f64]) {
        let k = self.grid.locate(t);
        let (t0, t1) = (self.grid.node(k), self.grid.node(k + 1));
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let a = self.node_slice(h, k);
        let b = self.node_slice(h, k + 1);
        for i in 0..out.len() {
            out[i] = if s == 0.0 {
                a[i]
            } else if s == 1.0 {
                b[i]
            } else {
                a[i] + s * (b[i] - a[i])
            };
        }
    }

    /// Cubic Hermite readout when slopes are stored, linear otherwise.
    pub fn eval_smooth_into(&self, h: usize, t: f64, out: &mut [f64]) {
        let Some(slopes) = &self.slopes else {
            return self.eval_into(h, t, out);
        };
        let k = self.grid.locate(t);
        let (t0, t1) = (self.grid.node(k), self.grid.node(k + 1));
        let t = t.clamp(t0, t1);
        if t == t0 || t == t1 {
            let i = if t == t0 { k } else { k + 1 };
            out.copy_from_slice(self.node_slice(h, i));
            return;
        }
        let len = self.rows * self.cols;
        let (o0, o1) = (self.offset(h, k), self.offset(h, k + 1));
        hermite_into(
            t0,
            t1,
            &self.values[o0..o0 + len],
            &self.values[o1..o1 + len],
            &slopes[o0..o0 + len],
            &slopes[o1..o1 + len],
            t,
            out,
        );
    }

    pub fn eval(&self, h: usize, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        self.eval_into(h, t, m.as_mut_slice());
        m
    }

    pub fn eval_smooth(&self, h: usize, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        self.eval_smooth_into(h, t, m.as_mut_slice());
        m
    }

    pub fn eval_vector(&self, h: usize, t: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.rows * self.cols);
        self.eval_smooth_into(h, t, v.as_mut_slice());
        v
    }

    /// Value at `(e, t)`; `t` left of the last jump time is clamped to it.
    pub fn field_eval(&self, index: &HistoryIndex, e: &ModeHistory, t: f64) -> Result<DMatrix<f64>> {
        let id = index.lookup(e)?;
        if !(t >= self.grid.start() - 1e-12 && t <= self.grid.end() + 1e-12) {
            return Err(Error::Domain(format!("t = {t} outside the field grid")));
        }
        Ok(self.eval(id, t.max(e.last_jump_time())))
    }

    /// `f(e ⊕ (t, theta), t) - f(e, t)`; at the jump cap the next-level
    /// field is zero.
    pub fn jump_difference(&self, index: &HistoryIndex, e: &ModeHistory, t: f64, theta: usize) -> Result<DMatrix<f64>> {
        let here = self.field_eval(index, e, t)?;
        if e.level() >= index.max_jumps() {
            return Ok(-here);
        }
        let next = e.concat(t, theta)?;
        Ok(self.field_eval(index, &next, t)? - here)
    }

    /// CSV with header `history_id,history,t,v0,...`, column-major values.
    pub fn write_csv<W: Write>(&self, index: &HistoryIndex, mut w: W) -> Result<()> {
        let cols: Vec<String> = (0..self.rows * self.cols).map(|i| format!("v{i}")).collect();
        writeln!(w, "history_id,history,t,{}", cols.join(","))?;
        for h in 0..self.histories {
            let label = index.label(h);
            for i in 0..self.grid.len() {
                let vals: Vec<String> = self.node_slice(h, i).iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{h},{label},{:.16e},{}", self.grid.node(i), vals.join(","))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_sequences(2, 0, 2), vec![vec![0], vec![0, 1], vec![0, 1, 0]]);
        assert_eq!(enumerate_sequences(3, 0, 1), vec![vec![0], vec![0, 1], vec![0, 2]]);
        assert_eq!(enumerate_sequences(2, 0, 0), vec![vec![0]]);
    }

    #[test]
    fn concat_examples() {
        let e = ModeHistory::root_timed(0);
        let f = e.concat(0.3, 1).unwrap();
        assert_eq!(f.seq(), &[0, 1]);
        assert_eq!(f.times().unwrap(), &[0.0, 0.3]);
        assert_eq!(f.concat(0.5, 0).unwrap().seq(), &[0, 1, 0]);
        assert!(e.concat(0.3, 0).is_err());
        assert!(f.concat(0.2, 0).is_err());
    }

    #[test]
    fn linear_readout() {
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let mut f = HistoryField::zeros(grid, 1, 1, 1);
        f.node_slice_mut(0, 1)[0] = 1.0;
        assert_eq!(f.eval(0, 0.25)[(0, 0)], 0.25);
        assert_eq!(f.eval(0, 1.0)[(0, 0)], 1.0);
    }

    #[test]
    fn jump_difference_examples() {
        let index = HistoryIndex::from_parts(2, 0, 2);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let mut f = HistoryField::zeros(grid, index.len(), 1, 1);
        for h in 0..index.len() {
            let v = if index.level(h) == 0 { 1.0 } else { 3.0 };
            for i in 0..grid.len() {
                f.node_slice_mut(h, i)[0] = v;
            }
        }
        let root = ModeHistory::root(0);
        assert_eq!(f.jump_difference(&index, &root, 0.4, 1).unwrap()[(0, 0)], 2.0);
        let top = ModeHistory::new(vec![0, 1, 0], None).unwrap();
        assert_eq!(f.jump_difference(&index, &top, 0.4, 1).unwrap()[(0, 0)], -3.0);
        assert!(f.field_eval(&index, &ModeHistory::root(1), 0.2).is_err());
    }

    #[test]
    fn constant_extension_left_of_last_jump() {
        let index = HistoryIndex::from_parts(2, 0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let mut f = HistoryField::zeros(grid, index.len(), 1, 1);
        for i in 0..grid.len() {
            f.node_slice_mut(1, i)[0] = grid.node(i);
        }
        let e = ModeHistory::root_timed(0).concat(0.5, 1).unwrap();
        assert_eq!(f.field_eval(&index, &e, 0.1).unwrap()[(0, 0)], 0.5);
    }

    fn branching_count(k: usize, j: usize) -> usize {
        (0..=j).map(|l| (k - 1).pow(l as u32)).sum()
    }

    proptest! {
        #[test]
        fn enumeration_size_and_order(k in 2usize..5, j in 0usize..5, g0 in 0usize..2) {
            let seqs = enumerate_sequences(k, g0, j);
            prop_assert_eq!(seqs.len(), branching_count(k, j));
            for w in seqs.windows(2) {
                prop_assert!(w[0].len() < w[1].len() || (w[0].len() == w[1].len() && w[0] < w[1]));
            }
            for s in &seqs {
                prop_assert_eq!(s[0], g0);
                prop_assert!(s.windows(2).all(|p| p[0] != p[1]));
            }
        }

        #[test]
        fn refinement_keeps_old_nodes(steps in 1usize..500, end in 0.1f64..10.0) {
            let g = TimeGrid::new(0.0, end, steps).unwrap();
            let f = g.refined();
            for i in 0..g.len() {
                prop_assert_eq!(g.node(i), f.node(2 * i));
            }
        }

        #[test]
        fn jump_difference_closes(t in 0.0f64..1.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let index = HistoryIndex::from_parts(2, 0, 3);
            let grid = TimeGrid::new(0.0, 1.0, 7).unwrap();
            let mut f = HistoryField::zeros(grid, index.len(), 1, 1);
            for h in 0..index.len() {
                for i in 0..grid.len() {
                    f.node_slice_mut(h, i)[0] = a * index.level(h) as f64 + b * grid.node(i);
                }
            }
            let e = ModeHistory::new(vec![0, 1], None).unwrap();
            let d = f.jump_difference(&index, &e, t, 0).unwrap()[(0, 0)];
            let here = f.field_eval(&index, &e, t).unwrap()[(0, 0)];
            let next = f.field_eval(&index, &e.concat(t, 0).unwrap(), t).unwrap()[(0, 0)];
            prop_assert!((d + here - next).abs() <= 1e-15 * (1.0 + next.abs()));
        }
    }
}
