//! Switched-system definition: modes, jump intensity, post-jump kernel and
//! the coefficient families `A`, `B`, `C`.
//!
//! Coefficients are jump time-homogeneous: they are functions of the mode
//! sequence visited so far and of the current time, never of the jump
//! instants. All built-in families key on the current (last) mode of the
//! sequence; every family is zeroed once `max_jumps` jumps have occurred.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, spectral_norm};

pub type Rows = Vec<Vec<f64>>;

/// Number of uniformly spaced points used by [`SwitchedSystem::validate`]
/// and by bound sampling.
pub const VALIDATION_POINTS: usize = 1001;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSpace {
    labels: Vec<String>,
    cemetery: String,
}

impl ModeSpace {
    pub fn new(labels: Vec<String>, cemetery: String) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("mode space must contain at least one mode".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate mode label {l:?}")));
            }
        }
        if labels.contains(&cemetery) {
            return Err(Error::Config(format!("cemetery label {cemetery:?} collides with a mode label")));
        }
        Ok(Self { labels, cemetery })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, mode: usize) -> &str {
        &self.labels[mode]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cemetery(&self) -> &str {
        &self.cemetery
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A mode of the switch process, or the absorbing cemetery reached after the
/// last admissible jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeState {
    Active(usize),
    Cemetery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensitySpec {
    Constant {
        rate: f64,
    },
    PerMode {
        rates: Vec<f64>,
    },
    /// `lambda(mode, t) = sum_k coefficients[mode][k] * t^k`.
    Polynomial {
        coefficients: Vec<Vec<f64>>,
    },
}

impl IntensitySpec {
    pub fn rate(&self, mode: usize, t: f64) -> f64 {
        match self {
            IntensitySpec::Constant { rate } => *rate,
            IntensitySpec::PerMode { rates } => rates[mode],
            IntensitySpec::Polynomial { coefficients } => {
                coefficients[mode].iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    /// `int_from^to lambda(mode, r) dr`, exact for every family.
    pub fn cumulative(&self, mode: usize, from: f64, to: f64) -> f64 {
        match self {
            IntensitySpec::Constant { rate } => rate * (to - from),
            IntensitySpec::PerMode { rates } => rates[mode] * (to - from),
            IntensitySpec::Polynomial { coefficients } => {
                let prim = |t: f64| {
                    coefficients[mode].iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * t + c / (k as f64 + 1.0))
                        * t
                };
                prim(to) - prim(from)
            }
        }
    }

    /// Constant in time (the inter-jump law is then exponential).
    pub fn is_time_homogeneous(&self) -> bool {
        match self {
            IntensitySpec::Polynomial { coefficients } => coefficients.iter().all(|c| c.len() <= 1),
            _ => true,
        }
    }

    fn check_shape(&self, modes: usize) -> Result<()> {
        match self {
            IntensitySpec::Constant { rate } if !rate.is_finite() => {
                Err(Error::Shape("intensity rate is not finite".into()))
            }
            IntensitySpec::PerMode { rates } if rates.len() != modes => {
                Err(Error::Shape(format!("per-mode intensity lists {} rates for {modes} modes", rates.len())))
            }
            IntensitySpec::Polynomial { coefficients } if coefficients.len() != modes => {
                Err(Error::Shape(format!("polynomial intensity lists {} modes, expected {modes}", coefficients.len())))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Two modes, every jump goes to the other one.
    Swap,
    /// Uniform over the other modes.
    Uniform,
    /// Row-stochastic matrix, `rows[from][to]`.
    Matrix { rows: Rows },
}

impl KernelSpec {
    pub fn weights(&self, mode: usize, _t: f64, modes: usize) -> Vec<f64> {
        match self {
            KernelSpec::Swap => (0..modes).map(|m| if m == mode { 0.0 } else { 1.0 }).collect(),
            KernelSpec::Uniform => {
                if modes == 1 {
                    return vec![0.0];
                }
                let w = 1.0 / (modes as f64 - 1.0);
                (0..modes).map(|m| if m == mode { 0.0 } else { w }).collect()
            }
            KernelSpec::Matrix { rows } => rows[mode].clone(),
        }
    }

    fn check_shape(&self, modes: usize) -> Result<()> {
        match self {
            KernelSpec::Swap if modes != 2 => {
                Err(Error::Shape(format!("swap kernel needs exactly two modes, got {modes}")))
            }
            KernelSpec::Matrix { rows } if rows.len() != modes || rows.iter().any(|r| r.len() != modes) => {
                Err(Error::Shape(format!("kernel matrix must be {modes}x{modes}")))
            }
            _ => Ok(()),
        }
    }
}

/// `C` for a mode: one matrix shared by all marks, or one per mark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarkMatrix {
    Shared(Rows),
    PerMark(Vec<Rows>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoefficients {
    pub a: Rows,
    pub b: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MarkMatrix>,
}

/// Matrix polynomials in `t`, ascending powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialCoefficients {
    pub a: Vec<Rows>,
    pub b: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<MarkMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    Constant {
        a: Rows,
        b: Rows,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<MarkMatrix>,
    },
    PerMode {
        modes: Vec<ModeCoefficients>,
    },
    Polynomial {
        modes: Vec<PolynomialCoefficients>,
    },
}

/// Sup-norm bounds (spectral norm) on the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormBounds {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

fn default_cemetery() -> String {
    "cemetery".to_string()
}

/// Serializable description of a switched system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: f64,
    pub max_jumps: usize,
    pub modes: Vec<String>,
    #[serde(default = "default_cemetery")]
    pub cemetery: String,
    pub initial_mode: String,
    pub intensity: IntensitySpec,
    pub kernel: KernelSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<NormBounds>,
}

/// Coefficient values at one `(history, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientValues {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Indexed by mark (post-jump mode).
    pub c: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
struct PolyMatrix {
    powers: Vec<DMatrix<f64>>,
}

impl PolyMatrix {
    fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut acc = self.powers.last().expect("non-empty polynomial").clone();
        for p in self.powers.iter().rev().skip(1) {
            acc = acc * t + p;
        }
        acc
    }
}

#[derive(Clone, Debug)]
struct CoefficientFamily {
    a: Vec<PolyMatrix>,
    b: Vec<PolyMatrix>,
    /// `[mode][mark]`
    c: Vec<Vec<PolyMatrix>>,
}

fn parse_marks(c: Option<&MarkMatrix>, n: usize, modes: usize, what: &str) -> Result<Vec<DMatrix<f64>>> {
    match c {
        None => Ok(vec![DMatrix::zeros(n, n); modes]),
        Some(MarkMatrix::Shared(rows)) => {
            let m = matrix_from_rows(rows, n, n, what)?;
            Ok(vec![m; modes])
        }
        Some(MarkMatrix::PerMark(list)) => {
            if list.len() != modes {
                return Err(Error::Shape(format!("{what}: {} mark matrices for {modes} marks", list.len())));
            }
            list.iter().map(|rows| matrix_from_rows(rows, n, n, what)).collect()
        }
    }
}

impl CoefficientFamily {
    fn build(spec: &CoefficientSpec, n: usize, d: usize, modes: usize) -> Result<Self> {
        let constant = |m: DMatrix<f64>| PolyMatrix { powers: vec![m] };
        match spec {
            CoefficientSpec::Constant { a, b, c } => {
                let a = matrix_from_rows(a, n, n, "A")?;
                let b = matrix_from_rows(b, n, d, "B")?;
                let c = parse_marks(c.as_ref(), n, modes, "C")?;
                Ok(Self {
                    a: vec![constant(a); modes],
                    b: vec![constant(b); modes],
                    c: vec![c.into_iter().map(constant).collect(); modes],
                })
            }
            CoefficientSpec::PerMode { modes: per } => {
                if per.len() != modes {
                    return Err(Error::Shape(format!(
                        "per-mode coefficients list {} modes, expected {modes}",
                        per.len()
                    )));
                }
                let mut fam = Self { a: vec![], b: vec![], c: vec![] };
                for (i, m) in per.iter().enumerate() {
                    fam.a.push(constant(matrix_from_rows(&m.a, n, n, &format!("A[{i}]"))?));
                    fam.b.push(constant(matrix_from_rows(&m.b, n, d, &format!("B[{i}]"))?));
                    let c = parse_marks(m.c.as_ref(), n, modes, &format!("C[{i}]"))?;
                    fam.c.push(c.into_iter().map(constant).collect());
                }
                Ok(fam)
            }
            CoefficientSpec::Polynomial { modes: per } => {
                if per.len() != modes {
                    return Err(Error::Shape(format!(
                        "polynomial coefficients list {} modes, expected {modes}",
                        per.len()
                    )));
                }
                let mut fam = Self { a: vec![], b: vec![], c: vec![] };
                for (i, m) in per.iter().enumerate() {
                    if m.a.is_empty() || m.b.is_empty() {
                        return Err(Error::Shape(format!("mode {i}: empty polynomial")));
                    }
                    let a =
                        m.a.iter()
                            .map(|r| matrix_from_rows(r, n, n, &format!("A[{i}]")))
                            .collect::<Result<Vec<_>>>()?;
                    let b =
                        m.b.iter()
                            .map(|r| matrix_from_rows(r, n, d, &format!("B[{i}]")))
                            .collect::<Result<Vec<_>>>()?;
                    fam.a.push(PolyMatrix { powers: a });
                    fam.b.push(PolyMatrix { powers: b });
                    let mut per_mark: Vec<Vec<DMatrix<f64>>> = vec![vec![]; modes];
                    if m.c.is_empty() {
                        for slot in per_mark.iter_mut() {
                            slot.push(DMatrix::zeros(n, n));
                        }
                    }
                    for power in &m.c {
                        let ms = parse_marks(Some(power), n, modes, &format!("C[{i}]"))?;
                        for (slot, mat) in per_mark.iter_mut().zip(ms) {
                            slot.push(mat);
                        }
                    }
                    fam.c.push(per_mark.into_iter().map(|powers| PolyMatrix { powers }).collect());
                }
                Ok(fam)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub grid_points: usize,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(ValidationCheck { name: name.to_string(), passed, detail });
    }
}

/// A validated-shape switched system. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    spec: SystemSpec,
    modes: ModeSpace,
    gamma0: usize,
    family: CoefficientFamily,
    bounds: NormBounds,
}

impl SwitchedSystem {
    /// Builds the system. Shape and label errors abort here; bound and
    /// sign violations are left to [`SwitchedSystem::validate`].
    pub fn new(spec: SystemSpec) -> Result<Self> {
        if spec.state_dim == 0 || spec.control_dim == 0 {
            return Err(Error::Shape("state and control dimensions must be >= 1".into()));
        }
        if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", spec.horizon)));
        }
        if spec.max_jumps == 0 {
            return Err(Error::Config("max_jumps must be >= 1".into()));
        }
        let modes = ModeSpace::new(spec.modes.clone(), spec.cemetery.clone())?;
        let gamma0 = modes
            .index_of(&spec.initial_mode)
            .ok_or_else(|| Error::Config(format!("initial mode {:?} is not a mode", spec.initial_mode)))?;
        spec.intensity.check_shape(modes.len())?;
        spec.kernel.check_shape(modes.len())?;
        let family = CoefficientFamily::build(&spec.coefficients, spec.state_dim, spec.control_dim, modes.len())?;
        let mut sys = Self { bounds: NormBounds { lambda: 0.0, a: 0.0, b: 0.0, c: 0.0 }, spec, modes, gamma0, family };
        sys.bounds = match sys.spec.bounds {
            Some(b) => b,
            None => sys.sampled_bounds(),
        };
        Ok(sys)
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    /// The spec with the effective bounds filled in.
    pub fn effective_spec(&self) -> SystemSpec {
        let mut s = self.spec.clone();
        s.bounds = Some(self.bounds);
        s
    }

    pub fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.spec.control_dim
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn max_jumps(&self) -> usize {
        self.spec.max_jumps
    }

    pub fn initial_mode(&self) -> usize {
        self.gamma0
    }

    pub fn modes(&self) -> &ModeSpace {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn bounds(&self) -> NormBounds {
        self.bounds
    }

    pub fn intensity(&self) -> &IntensitySpec {
        &self.spec.intensity
    }

    pub fn rate(&self, state: ModeState, t: f64) -> f64 {
        match state {
            ModeState::Active(m) => self.spec.intensity.rate(m, t),
            ModeState::Cemetery => 0.0,
        }
    }

    pub fn kernel_weights(&self, mode: usize, t: f64) -> Vec<f64> {
        self.spec.kernel.weights(mode, t, self.modes.len())
    }

    /// Mark-indexed compensator density `theta -> lambda(mode,t) Q(mode,t,{theta})`.
    pub fn compensator_density(&self, state: ModeState, t: f64) -> Vec<f64> {
        match state {
            ModeState::Cemetery => vec![0.0; self.modes.len()],
            ModeState::Active(m) => {
                let lam = self.spec.intensity.rate(m, t);
                self.kernel_weights(m, t).into_iter().map(|q| lam * q).collect()
            }
        }
    }

    /// Mode state after the jumps recorded in `seq` (cemetery at level `J`).
    pub fn state_of(&self, seq: &[usize]) -> ModeState {
        if seq.len() > self.spec.max_jumps {
            ModeState::Cemetery
        } else {
            ModeState::Active(*seq.last().expect("non-empty mode sequence"))
        }
    }

    /// Compensator density seen by a process whose jump history is `seq`.
    pub fn history_compensator(&self, seq: &[usize], t: f64) -> Vec<f64> {
        self.compensator_density(self.state_of(seq), t)
    }

    /// `A_j(e,t)`, `B_j(e,t)`, `C_j(e,t,.)` for the mode sequence `seq`
    /// (`j = seq.len() - 1`). Zero once `j >= J`.
    pub fn eval_coefficients(&self, seq: &[usize], t: f64) -> Result<CoefficientValues> {
        let (n, d, k) = (self.spec.state_dim, self.spec.control_dim, self.modes.len());
        if seq.is_empty() || seq.len() > self.spec.max_jumps + 1 {
            return Err(Error::Domain(format!(
                "mode sequence of length {} outside 1..={}",
                seq.len(),
                self.spec.max_jumps + 1
            )));
        }
        if seq.iter().any(|&m| m >= k) {
            return Err(Error::Domain(format!("mode sequence {seq:?} has unknown modes")));
        }
        if seq.len() > self.spec.max_jumps {
            return Ok(CoefficientValues {
                a: DMatrix::zeros(n, n),
                b: DMatrix::zeros(n, d),
                c: vec![DMatrix::zeros(n, n); k],
            });
        }
        let m = *seq.last().unwrap();
        Ok(CoefficientValues {
            a: self.family.a[m].eval(t),
            b: self.family.b[m].eval(t),
            c: self.family.c[m].iter().map(|p| p.eval(t)).collect(),
        })
    }

    fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        let t = self.spec.horizon;
        (0..VALIDATION_POINTS).map(move |i| t * i as f64 / (VALIDATION_POINTS - 1) as f64)
    }

    fn sampled_bounds(&self) -> NormBounds {
        let mut b = NormBounds { lambda: 0.0, a: 0.0, b: 0.0, c: 0.0 };
        for t in self.sample_times() {
            for m in 0..self.modes.len() {
                b.lambda = b.lambda.max(self.spec.intensity.rate(m, t));
                let v = self.eval_coefficients(&[m], t).expect("level-0 evaluation");
                b.a = b.a.max(spectral_norm(&v.a));
                b.b = b.b.max(spectral_norm(&v.b));
                for c in &v.c {
                    b.c = b.c.max(spectral_norm(c));
                }
            }
        }
        b
    }

    /// Checks the standing assumptions on the validation grid.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport { grid_points: VALIDATION_POINTS, checks: vec![] };
        let k = self.modes.len();
        rep.push(
            "dimensions",
            true,
            format!(
                "n={} d={} T={} J={}",
                self.spec.state_dim, self.spec.control_dim, self.spec.horizon, self.spec.max_jumps
            ),
        );
        rep.push("mode space", true, format!("{k} modes, cemetery {:?}", self.modes.cemetery()));

        let mut min_rate = f64::INFINITY;
        let mut max_rate: f64 = 0.0;
        let mut worst_sum: f64 = 0.0;
        let mut worst_neg: f64 = 0.0;
        let mut worst_self: f64 = 0.0;
        let mut worst_comp: f64 = 0.0;
        let mut finite = true;
        let mut norms = NormBounds { lambda: 0.0, a: 0.0, b: 0.0, c: 0.0 };
        for t in self.sample_times() {
            for m in 0..k {
                let lam = self.spec.intensity.rate(m, t);
                finite &= lam.is_finite();
                min_rate = min_rate.min(lam);
                max_rate = max_rate.max(lam);
                let w = self.kernel_weights(m, t);
                worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
                worst_neg = worst_neg.max(w.iter().fold(0.0_f64, |acc, x| acc.max(-x)));
                worst_self = worst_self.max(w[m].abs());
                let comp: f64 = self.compensator_density(ModeState::Active(m), t).iter().sum();
                worst_comp = worst_comp.max((comp - lam).abs());
                let v = self.eval_coefficients(&[m], t).expect("level-0 evaluation");
                let all = v.a.iter().chain(v.b.iter()).chain(v.c.iter().flat_map(|c| c.iter()));
                finite &= all.clone().all(|x| x.is_finite());
                norms.a = norms.a.max(spectral_norm(&v.a));
                norms.b = norms.b.max(spectral_norm(&v.b));
                for c in &v.c {
                    norms.c = norms.c.max(spectral_norm(c));
                }
            }
        }
        let cem: f64 = self.compensator_density(ModeState::Cemetery, 0.0).iter().sum();
        rep.push("negative intensity", min_rate >= 0.0, format!("min lambda on grid = {min_rate:.6e}"));
        rep.push(
            "intensity bound",
            max_rate <= self.bounds.lambda,
            format!("max lambda {max_rate:.6e} vs declared {:.6e}", self.bounds.lambda),
        );
        rep.push("cemetery intensity", cem == 0.0, format!("lambda(cemetery) = {cem}"));
        rep.push(
            "kernel weights",
            worst_sum <= 1e-12 && worst_neg == 0.0,
            format!("max |sum - 1| = {worst_sum:.3e}, most negative weight = {:.3e}", -worst_neg),
        );
        rep.push("fictive jumps", worst_self == 0.0, format!("max Q(mode, {{mode}}) = {worst_self:.3e}"));
        rep.push("compensator total", worst_comp <= 1e-12, format!("max |sum_theta rate - lambda| = {worst_comp:.3e}"));
        rep.push("finite coefficients", finite, String::new());
        for (name, got, declared) in [
            ("A bound", norms.a, self.bounds.a),
            ("B bound", norms.b, self.bounds.b),
            ("C bound", norms.c, self.bounds.c),
        ] {
            rep.push(
                name,
                got <= declared * (1.0 + 1e-12) + 1e-300,
                format!("sampled {got:.6e} vs declared {declared:.6e}"),
            );
        }
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn example4_validates() {
        let sys = catalog::example4(12);
        let rep = sys.validate();
        assert!(rep.passed(), "{:?}", rep.failures());
    }

    #[test]
    fn self_jump_kernel_is_flagged() {
        let mut spec = catalog::example4(3).spec().clone();
        spec.kernel = KernelSpec::Matrix { rows: vec![vec![1.0, 0.0], vec![1.0, 0.0]] };
        let rep = SwitchedSystem::new(spec).unwrap().validate();
        assert!(!rep.passed());
        assert!(rep.failures().iter().any(|c| c.name == "fictive jumps"));
    }

    #[test]
    fn negative_rate_is_flagged() {
        let mut spec = catalog::example4(3).spec().clone();
        spec.intensity = IntensitySpec::Constant { rate: -1.0 };
        spec.bounds = None;
        let rep = SwitchedSystem::new(spec).unwrap().validate();
        assert!(rep.failures().iter().any(|c| c.name == "negative intensity"));
    }

    #[test]
    fn declared_bound_violation_is_reported_not_clipped() {
        let mut spec = catalog::example4(3).spec().clone();
        spec.bounds = Some(NormBounds { lambda: 1.0, a: 0.5, b: 1.0, c: 0.0 });
        let sys = SwitchedSystem::new(spec).unwrap();
        let rep = sys.validate();
        assert!(rep.failures().iter().any(|c| c.name == "A bound"));
        assert_eq!(sys.bounds().a, 0.5);
    }

    #[test]
    fn shape_mismatch_aborts() {
        let mut spec = catalog::example4(3).spec().clone();
        spec.coefficients = CoefficientSpec::Constant { a: vec![vec![1.0]], b: vec![vec![0.0], vec![1.0]], c: None };
        assert!(matches!(SwitchedSystem::new(spec), Err(Error::Shape(_))));
    }

    #[test]
    fn example4_coefficients() {
        let sys = catalog::example4(4);
        for seq in [vec![0], vec![0, 1], vec![0, 1, 0]] {
            let v = sys.eval_coefficients(&seq, 0.37).unwrap();
            assert_eq!(v.a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
            assert_eq!(v.b, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
            assert!(v.c.iter().all(|c| c.iter().all(|x| *x == 0.0)));
        }
    }

    #[test]
    fn coefficients_vanish_after_last_jump() {
        let sys = catalog::example2(2);
        let v = sys.eval_coefficients(&[0, 1, 0], 0.5).unwrap();
        assert!(v.a.iter().chain(v.b.iter()).all(|x| *x == 0.0));
        assert!(sys.eval_coefficients(&[0, 1, 0, 1], 0.5).is_err());
    }

    #[test]
    fn example1_mode_dependent_drift() {
        let sys = catalog::example1(6);
        assert_eq!(sys.eval_coefficients(&[0, 1], 0.2).unwrap().a[(0, 0)], 1.0);
        assert_eq!(sys.eval_coefficients(&[0, 1, 0], 0.2).unwrap().a[(0, 0)], 0.0);
    }

    #[test]
    fn compensator_examples() {
        let sys = catalog::example4(3);
        assert_eq!(sys.compensator_density(ModeState::Active(0), 0.4), vec![0.0, 1.0]);
        assert_eq!(sys.compensator_density(ModeState::Cemetery, 0.4), vec![0.0, 0.0]);
        let quiet = catalog::zero_system(2, 1, 3, 0.0);
        assert!(quiet.compensator_density(ModeState::Active(0), 0.1).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let sys = catalog::random_bounded(7, 3);
        let a = sys.eval_coefficients(&[0, 2, 1], 0.123).unwrap();
        let b = sys.eval_coefficients(&[0, 2, 1], 0.123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn polynomial_intensity_integrates_exactly() {
        let lam = IntensitySpec::Polynomial { coefficients: vec![vec![1.0, 2.0, 3.0]] };
        // int_0.2^0.9 (1 + 2t + 3t^2) dt
        let exact = (0.9 - 0.2) + (0.81 - 0.04) + (0.729 - 0.008);
        assert!((lam.cumulative(0, 0.2, 0.9) - exact).abs() < 1e-14);
        assert!(!lam.is_time_homogeneous());
    }

    #[test]
    fn config_roundtrip() {
        let spec = catalog::random_bounded(3, 2).effective_spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back: SystemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
