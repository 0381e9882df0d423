//! Parametric terminal targets `xi = sum_i coef_i * atom_i`.
//!
//! Atoms are bounded functionals of the switch path on `[0, T]`: constants,
//! predicates on the jump count, the jump-count parity, the final mode and
//! functions of the first jump time.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::structure::HistoryIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountOp {
    Ge,
    Eq,
    Le,
}

/// Bounded function of the first jump time on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFunction {
    /// `t -> 1`
    One,
    /// `t -> exp(rate * t)`
    Exp { rate: f64 },
    /// `t -> t^exponent`
    Power { exponent: u32 },
}

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::One => 1.0,
            TimeFunction::Exp { rate } => (rate * t).exp(),
            TimeFunction::Power { exponent } => t.powi(*exponent as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atom {
    Constant,
    /// `1{N_T op k}` with `N_T` the number of jumps on `[0, T]`.
    JumpCount {
        op: CountOp,
        k: usize,
    },
    /// `(-1)^{N_T}`
    Parity,
    /// `1{mode at T = mode}`
    FinalMode {
        mode: String,
    },
    /// `f(T1)` on `{T1 <= T}` and `no_jump_value` otherwise.
    FirstJump {
        function: TimeFunction,
        #[serde(default)]
        no_jump_value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: Vec<f64>,
    pub atom: Atom,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub terms: Vec<Term>,
}

/// `xi = base(e) + sum_k f_k(T1) * first_jump[k].terminal(e)`, where the
/// first-jump terminals vanish on the no-jump history.
#[derive(Clone, Debug)]
pub struct StructuralTerminal {
    pub base: Vec<DVector<f64>>,
    pub first_jump: Vec<FirstJumpTerminal>,
}

#[derive(Clone, Debug)]
pub struct FirstJumpTerminal {
    pub function: TimeFunction,
    pub terminal: Vec<DVector<f64>>,
}

impl StructuralTerminal {
    pub fn is_jump_time_free(&self) -> bool {
        self.first_jump.is_empty()
    }
}

impl TargetSpec {
    pub fn zero() -> Self {
        Self { terms: vec![] }
    }

    pub fn constant(v: &[f64]) -> Self {
        Self { terms: vec![Term { coef: v.to_vec(), atom: Atom::Constant }] }
    }

    /// `coef * 1{T1 <= T}`
    pub fn first_jump_indicator(coef: &[f64]) -> Self {
        Self {
            terms: vec![Term {
                coef: coef.to_vec(),
                atom: Atom::FirstJump { function: TimeFunction::One, no_jump_value: 0.0 },
            }],
        }
    }

    pub fn plus(mut self, other: &TargetSpec) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: t.coef.iter().map(|v| c * v).collect(), atom: t.atom.clone() })
                .collect(),
        }
    }

    pub fn depends_on_jump_times(&self) -> bool {
        self.terms.iter().any(|t| matches!(t.atom, Atom::FirstJump { .. }))
    }

    pub fn check(&self, sys: &SwitchedSystem) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if t.coef.len() != sys.state_dim() {
                return Err(Error::Shape(format!(
                    "target term {i}: coefficient of length {} for state dimension {}",
                    t.coef.len(),
                    sys.state_dim()
                )));
            }
            if t.coef.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("target term {i}: non-finite coefficient")));
            }
            match &t.atom {
                Atom::FinalMode { mode } if sys.modes().index_of(mode).is_none() => {
                    return Err(Error::Domain(format!("target term {i}: unknown mode {mode:?}")));
                }
                Atom::FirstJump { function: TimeFunction::Exp { rate }, no_jump_value }
                    if !rate.is_finite() || !no_jump_value.is_finite() =>
                {
                    return Err(Error::Domain(format!("target term {i}: non-finite parameter")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn jump_time_free_atom(&self, sys: &SwitchedSystem, atom: &Atom, seq: &[usize]) -> f64 {
        let count = seq.len() - 1;
        match atom {
            Atom::Constant => 1.0,
            Atom::JumpCount { op, k } => {
                let hit = match op {
                    CountOp::Ge => count >= *k,
                    CountOp::Eq => count == *k,
                    CountOp::Le => count <= *k,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Atom::Parity => {
                if count % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Atom::FinalMode { mode } => {
                if sys.modes().index_of(mode) == seq.last().copied() {
                    1.0
                } else {
                    0.0
                }
            }
            Atom::FirstJump { .. } => unreachable!("handled by the caller"),
        }
    }

    /// `xi` on a realized path with mode sequence `seq` and jump times
    /// `jumps` (`jumps.len() == seq.len() - 1`).
    pub fn evaluate(&self, sys: &SwitchedSystem, seq: &[usize], jumps: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(sys.state_dim());
        for t in &self.terms {
            let w = match &t.atom {
                Atom::FirstJump { function, no_jump_value } => match jumps.first() {
                    Some(t1) => function.eval(*t1),
                    None => *no_jump_value,
                },
                atom => self.jump_time_free_atom(sys, atom, seq),
            };
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += w * c;
            }
        }
        out
    }

    /// Splits the target into history-indexed terminal vectors.
    pub fn structural(&self, sys: &SwitchedSystem, index: &HistoryIndex) -> Result<StructuralTerminal> {
        self.check(sys)?;
        let n = sys.state_dim();
        let mut base = vec![DVector::zeros(n); index.len()];
        let mut first_jump = vec![];
        for t in &self.terms {
            let coef = DVector::from_column_slice(&t.coef);
            match &t.atom {
                Atom::FirstJump { function, no_jump_value } => {
                    base[0] += &coef * *no_jump_value;
                    let terminal = (0..index.len())
                        .map(|h| if index.level(h) == 0 { DVector::zeros(n) } else { coef.clone() })
                        .collect();
                    first_jump.push(FirstJumpTerminal { function: *function, terminal });
                }
                atom => {
                    for (h, b) in base.iter_mut().enumerate() {
                        *b += &coef * self.jump_time_free_atom(sys, atom, index.seq(h));
                    }
                }
            }
        }
        Ok(StructuralTerminal { base, first_jump })
    }
}
