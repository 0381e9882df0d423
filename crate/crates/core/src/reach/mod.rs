//! Value of the reachability problem, verdicts and verification of the
//! synthesized control.

pub mod quadrature;
pub mod value;
pub mod verify;

pub use quadrature::{expectation_quadrature, quadratic_functional, QuadratureMode};
pub use value::{reachability_verdict, value_vn, ValueReport, Verdict, VerdictSettings};
pub use verify::{synthesize, verify, Synthesis, VerifyReport, VerifySettings};
