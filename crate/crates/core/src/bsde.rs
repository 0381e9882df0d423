//! Linear backward equations driven by the marked point process, reduced to
//! one backward ODE per jump history.
//!
//! A spec gives, at `(history, t)`, the drift matrix `D` and per mark the
//! maps of the compensator integrand `hat = P x + R z` and of the jump
//! integrand `H = O x + K z`. With `x' = x(e ⊕ theta, t)` the second
//! component is `z = K^{-1} (x' - x - O x)` and between jumps
//!
//! ```text
//! dx/dt = D x + sum_theta r(theta) (hat(theta) - H(theta)).
//! ```
//!
//! Targets depending on the first jump time `T1` are handled by
//! superposition: on levels `>= 1` the solution is
//! `base + sum_k f_k(T1) X_k`, and the no-jump level sees the continuation
//! with `T1 = t`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::invert;
use crate::model::SwitchedSystem;
use crate::ode::Rk4;
use crate::riccati::RiccatiSolution;
use crate::structure::{HistoryField, HistoryIndex, TimeGrid};
use crate::target::{StructuralTerminal, TargetSpec, TimeFunction};

/// Per-mark maps of a linear backward equation.
#[derive(Clone, Debug)]
pub struct JumpMaps {
    pub hat_x: DMatrix<f64>,
    pub hat_z: DMatrix<f64>,
    pub offset: DMatrix<f64>,
    pub coupler: DMatrix<f64>,
}

pub trait LinearBsdeSpec: Sync {
    fn system(&self) -> &SwitchedSystem;
    fn drift(&self, h: usize, t: f64) -> DMatrix<f64>;
    fn jump_maps(&self, h: usize, t: f64, mark: usize) -> JumpMaps;
}

/// First components on the history grid.
#[derive(Clone, Debug)]
pub struct BsdeSolution {
    index: HistoryIndex,
    base: HistoryField,
    first_jump: Vec<(TimeFunction, HistoryField)>,
}

impl BsdeSolution {
    pub fn index(&self) -> &HistoryIndex {
        &self.index
    }

    pub fn grid(&self) -> &TimeGrid {
        self.base.grid()
    }

    pub fn dim(&self) -> usize {
        self.base.shape().0
    }

    pub fn base_field(&self) -> &HistoryField {
        &self.base
    }

    pub fn depends_on_first_jump(&self) -> bool {
        !self.first_jump.is_empty()
    }

    /// Time functions and fields of the first-jump terms.
    pub fn first_jump_terms(&self) -> &[(TimeFunction, HistoryField)] {
        &self.first_jump
    }

    /// `x(h, t)` given the first jump time `t1` (ignored with no jump).
    pub fn first(&self, h: usize, t: f64, t1: f64) -> DVector<f64> {
        let mut v = self.base.eval_vector(h, t);
        if self.index.level(h) > 0 {
            for (f, field) in &self.first_jump {
                v += field.eval_vector(h, t) * f.eval(t1);
            }
        }
        v
    }

    /// `x(h ⊕ (t, mark), t)`, or `None` past the jump cap.
    pub fn continuation(&self, h: usize, t: f64, t1: f64, mark: usize) -> Option<DVector<f64>> {
        let t1 = if self.index.level(h) == 0 { t } else { t1 };
        self.index.child(h, mark).map(|c| self.first(c, t, t1))
    }

    /// Number of superposed components: the base plus one per first-jump term.
    pub fn component_count(&self) -> usize {
        1 + self.first_jump.len()
    }

    fn component_field(&self, comp: usize) -> &HistoryField {
        if comp == 0 {
            &self.base
        } else {
            &self.first_jump[comp - 1].1
        }
    }

    /// Weight of component `comp` for first jump time `t1`.
    pub fn component_weight(&self, comp: usize, t1: f64) -> f64 {
        if comp == 0 {
            1.0
        } else {
            self.first_jump[comp - 1].0.eval(t1)
        }
    }

    /// Second component of a single superposed component on a history with
    /// at least one jump; `z = sum_comp weight(comp, t1) * z_comp`.
    pub fn component_second<S: LinearBsdeSpec + ?Sized>(
        &self,
        spec: &S,
        comp: usize,
        h: usize,
        t: f64,
        mark: usize,
    ) -> Result<DVector<f64>> {
        debug_assert!(self.index.level(h) > 0);
        let field = self.component_field(comp);
        let x = field.eval_vector(h, t);
        let next = match self.index.child(h, mark) {
            Some(c) => field.eval_vector(c, t),
            None => DVector::zeros(self.dim()),
        };
        let maps = spec.jump_maps(h, t, mark);
        Ok(invert(&maps.coupler)? * (next - &x - &maps.offset * &x))
    }

    /// Second component `z(h, t, mark)`.
    pub fn second<S: LinearBsdeSpec + ?Sized>(
        &self,
        spec: &S,
        h: usize,
        t: f64,
        t1: f64,
        mark: usize,
    ) -> Result<DVector<f64>> {
        let x = self.first(h, t, t1);
        let next = self.continuation(h, t, t1, mark).unwrap_or_else(|| DVector::zeros(self.dim()));
        let maps = spec.jump_maps(h, t, mark);
        let kinv = invert(&maps.coupler)?;
        Ok(kinv * (next - &x - &maps.offset * &x))
    }

    /// Largest `|x(e ⊕ theta) - x(e) - H(theta)|` over histories, nodes and
    /// charged marks.
    pub fn jump_residual<S: LinearBsdeSpec + ?Sized>(&self, spec: &S, t1: f64) -> Result<f64> {
        let sys = spec.system();
        let mut worst: f64 = 0.0;
        for h in 0..self.index.len() {
            for t in self.grid().nodes() {
                for (mark, r) in sys.history_compensator(self.index.seq(h), t).iter().enumerate() {
                    if *r == 0.0 {
                        continue;
                    }
                    let x = self.first(h, t, t1);
                    let next = self.continuation(h, t, t1, mark).unwrap_or_else(|| DVector::zeros(self.dim()));
                    let z = self.second(spec, h, t, t1, mark)?;
                    let maps = spec.jump_maps(h, t, mark);
                    let jump = &maps.offset * &x + &maps.coupler * z;
                    worst = worst.max((next - x - jump).amax());
                }
            }
        }
        Ok(worst)
    }
}

/// Children evaluator `(mark, t) -> x(child, t)`.
type ChildEval<'a> = dyn Fn(usize, f64, &mut [f64]) -> bool + Sync + 'a;

fn solve_history<S: LinearBsdeSpec + ?Sized>(
    spec: &S,
    index: &HistoryIndex,
    grid: &TimeGrid,
    h: usize,
    terminal: &DVector<f64>,
    child: &ChildEval<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = spec.system();
    let n = terminal.len();
    let len = grid.len();
    let mut values = vec![0.0; len * n];
    let mut slopes = vec![0.0; len * n];
    let mut failure: Option<Error> = None;
    let seq = index.seq(h);
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let x = DVector::from_column_slice(y);
        let mut out = spec.drift(h, t) * &x;
        let mut next = vec![0.0; n];
        for (mark, r) in sys.history_compensator(seq, t).into_iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            if !child(mark, t, &mut next) {
                next.fill(0.0);
            }
            let maps = spec.jump_maps(h, t, mark);
            let kinv = match invert(&maps.coupler) {
                Ok(k) => k,
                Err(e) => {
                    failure.get_or_insert(e);
                    continue;
                }
            };
            let ox = &maps.offset * &x;
            let z = &kinv * (DVector::from_column_slice(&next) - &x - &ox);
            let hat = &maps.hat_x * &x + &maps.hat_z * &z;
            let jump = ox + &maps.coupler * &z;
            out += (hat - jump) * r;
        }
        dy.copy_from_slice(out.as_slice());
    };
    let mut y = terminal.as_slice().to_vec();
    values[(len - 1) * n..].copy_from_slice(&y);
    let mut rk = Rk4::new(n);
    for i in (0..len - 1).rev() {
        let slope = rk.step(grid.node(i + 1), -grid.h(), &mut y, &mut rhs);
        slopes[(i + 1) * n..(i + 2) * n].copy_from_slice(slope);
        values[i * n..(i + 1) * n].copy_from_slice(&y);
    }
    let mut dy = vec![0.0; n];
    rhs(grid.node(0), &y, &mut dy);
    slopes[..n].copy_from_slice(&dy);
    if let Some(e) = failure {
        return Err(e);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite backward solution on history {:?}", seq)));
    }
    Ok((values, slopes))
}

fn store(field: &mut HistoryField, h: usize, (values, slopes): (Vec<f64>, Vec<f64>)) {
    let (v, s) = field.history_parts_mut(h);
    v.copy_from_slice(&values);
    s.expect("field has slopes").copy_from_slice(&slopes);
}

/// Descending solve of one component over levels `J, ..., lowest`.
fn solve_component<S: LinearBsdeSpec + ?Sized>(
    spec: &S,
    index: &HistoryIndex,
    field: &mut HistoryField,
    terminal: &[DVector<f64>],
    lowest: usize,
) -> Result<()> {
    let grid = *field.grid();
    for level in (lowest..=index.max_jumps()).rev() {
        let ids = index.level_ids(level).to_vec();
        let f = &*field;
        let child = |h: usize| {
            move |mark: usize, t: f64, out: &mut [f64]| match index.child(h, mark) {
                Some(c) => {
                    f.eval_smooth_into(c, t, out);
                    true
                }
                None => false,
            }
        };
        let solved: Vec<Result<(Vec<f64>, Vec<f64>)>> =
            ids.par_iter().map(|&h| solve_history(spec, index, &grid, h, &terminal[h], &child(h))).collect();
        for (&h, r) in ids.iter().zip(solved) {
            store(field, h, r?);
        }
    }
    Ok(())
}

/// Solves a linear backward equation with a structural terminal.
pub fn solve_structural_bsde<S: LinearBsdeSpec + ?Sized>(
    spec: &S,
    terminal: &StructuralTerminal,
    grid: TimeGrid,
) -> Result<BsdeSolution> {
    let sys = spec.system();
    let index = HistoryIndex::new(sys);
    let n = sys.state_dim();
    if terminal.base.len() != index.len() {
        return Err(Error::Shape("terminal does not match the history index".into()));
    }
    let mut base = HistoryField::zeros(grid, index.len(), n, 1).with_slopes();
    if terminal.is_jump_time_free() {
        solve_component(spec, &index, &mut base, &terminal.base, 0)?;
        return Ok(BsdeSolution { index, base, first_jump: vec![] });
    }
    solve_component(spec, &index, &mut base, &terminal.base, 1)?;
    let mut first_jump = vec![];
    for fj in &terminal.first_jump {
        let mut field = HistoryField::zeros(grid, index.len(), n, 1).with_slopes();
        solve_component(spec, &index, &mut field, &fj.terminal, 1)?;
        first_jump.push((fj.function, field));
    }
    let root = index.level_ids(0)[0];
    let child = |mark: usize, t: f64, out: &mut [f64]| match index.child(root, mark) {
        Some(c) => {
            base.eval_smooth_into(c, t, out);
            let mut tmp = vec![0.0; out.len()];
            for (f, field) in &first_jump {
                field.eval_smooth_into(c, t, &mut tmp);
                let w = f.eval(t);
                for (o, v) in out.iter_mut().zip(&tmp) {
                    *o += w * v;
                }
            }
            true
        }
        None => false,
    };
    let solved = solve_history(spec, &index, &grid, root, &terminal.base[root], &child)?;
    store(&mut base, root, solved);
    Ok(BsdeSolution { index, base, first_jump })
}

/// A solved equation together with the spec that defines its second
/// component.
pub struct Solved<S> {
    pub spec: S,
    pub solution: BsdeSolution,
}

impl<S: LinearBsdeSpec> Solved<S> {
    pub fn first(&self, h: usize, t: f64, t1: f64) -> DVector<f64> {
        self.solution.first(h, t, t1)
    }

    pub fn second(&self, h: usize, t: f64, t1: f64, mark: usize) -> Result<DVector<f64>> {
        self.solution.second(&self.spec, h, t, t1, mark)
    }

    pub fn jump_residual(&self, t1: f64) -> Result<f64> {
        self.solution.jump_residual(&self.spec, t1)
    }
}

/// `d eta = A eta dt - (Sigma C^T - Theta) zeta dq^ + (C eta + (I + Sigma + Theta) zeta) dq~`.
pub struct EtaZetaSpec<'a> {
    pub sys: &'a SwitchedSystem,
    pub ric: &'a RiccatiSolution,
}

impl LinearBsdeSpec for EtaZetaSpec<'_> {
    fn system(&self) -> &SwitchedSystem {
        self.sys
    }

    fn drift(&self, h: usize, t: f64) -> DMatrix<f64> {
        self.sys.eval_coefficients(self.ric.index().seq(h), t).expect("enumerated history").a
    }

    fn jump_maps(&self, h: usize, t: f64, mark: usize) -> JumpMaps {
        let n = self.sys.state_dim();
        let c = self.sys.eval_coefficients(self.ric.index().seq(h), t).expect("enumerated history").c;
        let sigma = self.ric.sigma(h, t);
        let next = self.ric.sigma_next(h, t, mark);
        let theta = &next - &sigma;
        JumpMaps {
            hat_x: DMatrix::zeros(n, n),
            hat_z: -(&sigma * c[mark].transpose() - theta),
            offset: c[mark].clone(),
            coupler: DMatrix::identity(n, n) + next,
        }
    }
}

/// Same first component as [`EtaZetaSpec`] written with a unit coupler; its
/// second component is `C eta + (I + Sigma + Theta) zeta`.
pub struct ToggledEtaSpec<'a> {
    pub sys: &'a SwitchedSystem,
    pub ric: &'a RiccatiSolution,
}

impl LinearBsdeSpec for ToggledEtaSpec<'_> {
    fn system(&self) -> &SwitchedSystem {
        self.sys
    }

    fn drift(&self, h: usize, t: f64) -> DMatrix<f64> {
        self.sys.eval_coefficients(self.ric.index().seq(h), t).expect("enumerated history").a
    }

    fn jump_maps(&self, h: usize, t: f64, mark: usize) -> JumpMaps {
        let n = self.sys.state_dim();
        let c = self.sys.eval_coefficients(self.ric.index().seq(h), t).expect("enumerated history").c;
        let sigma = self.ric.sigma(h, t);
        let next = self.ric.sigma_next(h, t, mark);
        let theta = &next - &sigma;
        let kinv = invert(&(DMatrix::identity(n, n) + &next)).expect("I + Sigma + Theta invertible");
        let g = (&sigma * c[mark].transpose() - theta) * kinv;
        JumpMaps { hat_x: &g * &c[mark], hat_z: -g, offset: DMatrix::zeros(n, n), coupler: DMatrix::identity(n, n) }
    }
}

/// `dX = -A^T X dt - C^T Z dq^ + Z dq~`.
pub struct DualSpec<'a> {
    pub sys: &'a SwitchedSystem,
    pub index: &'a HistoryIndex,
}

impl LinearBsdeSpec for DualSpec<'_> {
    fn system(&self) -> &SwitchedSystem {
        self.sys
    }

    fn drift(&self, h: usize, t: f64) -> DMatrix<f64> {
        -self.sys.eval_coefficients(self.index.seq(h), t).expect("enumerated history").a.transpose()
    }

    fn jump_maps(&self, h: usize, t: f64, mark: usize) -> JumpMaps {
        let n = self.sys.state_dim();
        let c = self.sys.eval_coefficients(self.index.seq(h), t).expect("enumerated history").c;
        JumpMaps {
            hat_x: DMatrix::zeros(n, n),
            hat_z: -c[mark].transpose(),
            offset: DMatrix::zeros(n, n),
            coupler: DMatrix::identity(n, n),
        }
    }
}

/// `dx = z dq~`: conditional expectations.
pub struct MartingaleSpec<'a> {
    pub sys: &'a SwitchedSystem,
}

impl LinearBsdeSpec for MartingaleSpec<'_> {
    fn system(&self) -> &SwitchedSystem {
        self.sys
    }

    fn drift(&self, _h: usize, _t: f64) -> DMatrix<f64> {
        let n = self.sys.state_dim();
        DMatrix::zeros(n, n)
    }

    fn jump_maps(&self, _h: usize, _t: f64, _mark: usize) -> JumpMaps {
        let n = self.sys.state_dim();
        JumpMaps {
            hat_x: DMatrix::zeros(n, n),
            hat_z: DMatrix::zeros(n, n),
            offset: DMatrix::zeros(n, n),
            coupler: DMatrix::identity(n, n),
        }
    }
}

pub fn solve_eta_zeta<'a>(
    sys: &'a SwitchedSystem,
    ric: &'a RiccatiSolution,
    xi: &TargetSpec,
) -> Result<Solved<EtaZetaSpec<'a>>> {
    let terminal = xi.scaled(-1.0).structural(sys, ric.index())?;
    let spec = EtaZetaSpec { sys, ric };
    let solution = solve_structural_bsde(&spec, &terminal, *ric.grid())?;
    Ok(Solved { spec, solution })
}

pub fn solve_toggled_eta<'a>(
    sys: &'a SwitchedSystem,
    ric: &'a RiccatiSolution,
    xi: &TargetSpec,
) -> Result<Solved<ToggledEtaSpec<'a>>> {
    let terminal = xi.scaled(-1.0).structural(sys, ric.index())?;
    let spec = ToggledEtaSpec { sys, ric };
    let solution = solve_structural_bsde(&spec, &terminal, *ric.grid())?;
    Ok(Solved { spec, solution })
}

/// Mean `E[xi]` and the representation `xi = E[xi] + int z dq~`.
pub fn martingale_representation<'a>(
    sys: &'a SwitchedSystem,
    xi: &TargetSpec,
    grid: TimeGrid,
) -> Result<(DVector<f64>, Solved<MartingaleSpec<'a>>)> {
    let index = HistoryIndex::new(sys);
    let terminal = xi.structural(sys, &index)?;
    let spec = MartingaleSpec { sys };
    let solution = solve_structural_bsde(&spec, &terminal, grid)?;
    let mean = solution.first(0, 0.0, 0.0);
    Ok((mean, Solved { spec, solution }))
}

pub fn solve_dual<'a>(
    sys: &'a SwitchedSystem,
    index: &'a HistoryIndex,
    terminal: &TargetSpec,
    grid: TimeGrid,
) -> Result<Solved<DualSpec<'a>>> {
    let term = terminal.structural(sys, index)?;
    let spec = DualSpec { sys, index };
    let solution = solve_structural_bsde(&spec, &term, grid)?;
    Ok(Solved { spec, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::target::{Atom, Term};

    fn grid(steps: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, steps).unwrap()
    }

    #[test]
    fn zero_terminal_gives_zero() {
        let sys = catalog::example3(4);
        let index = HistoryIndex::new(&sys);
        let dual = solve_dual(&sys, &index, &TargetSpec::zero(), grid(20)).unwrap();
        for h in 0..index.len() {
            assert_eq!(dual.first(h, 0.3, 0.0).amax(), 0.0);
            assert_eq!(dual.second(h, 0.3, 0.0, 1 - index.seq(h).last().unwrap()).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn conditional_expectation_of_first_jump_indicator() {
        let sys = catalog::example4(6);
        let (mean, rep) =
            martingale_representation(&sys, &TargetSpec::first_jump_indicator(&[1.0, 0.0]), grid(400)).unwrap();
        assert!((mean[0] - (1.0 - (-1f64).exp())).abs() < 1e-10);
        for t in [0.0, 0.25, 0.8] {
            let m = rep.first(0, t, 0.0)[0];
            assert!((m - (1.0 - (t - 1.0f64).exp())).abs() < 1e-10);
            let z = rep.second(0, t, 0.0, 1).unwrap()[0];
            assert!((z - (t - 1.0f64).exp()).abs() < 1e-10);
            let z_after = rep.second(1, t, 0.1, 0).unwrap()[0];
            assert!(z_after.abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_target_has_no_martingale_part() {
        let sys = catalog::example4(5);
        let (mean, rep) = martingale_representation(&sys, &TargetSpec::constant(&[2.0, -1.0]), grid(50)).unwrap();
        assert_eq!(mean.as_slice(), &[2.0, -1.0]);
        assert_eq!(rep.second(0, 0.5, 0.0, 1).unwrap().amax(), 0.0);
    }

    #[test]
    fn parity_target_has_piecewise_constant_dual() {
        let sys = catalog::example3(5);
        let index = HistoryIndex::new(&sys);
        let xi = TargetSpec { terms: vec![Term { coef: vec![1.0, 0.0], atom: Atom::Parity }] };
        let dual = solve_dual(&sys, &index, &xi, grid(10)).unwrap();
        for h in 0..index.len() {
            let sign = if index.level(h) % 2 == 0 { 1.0 } else { -1.0 };
            for t in [0.0, 0.33, 1.0] {
                let x = dual.first(h, t, 0.0);
                assert!((x[0] - sign).abs() < 1e-12 && x[1].abs() < 1e-12);
            }
        }
    }
}
