//! Approximate terminal reachability for piecewise linear switched systems
//! driven by a marked point process.
//!
//! The pipeline is: describe a [`model::SwitchedSystem`], solve the iterated
//! Riccati system ([`riccati`]), solve the linear backward systems attached
//! to a target ([`bsde`]), evaluate the penalized value and issue a verdict
//! ([`reach`]), and check the synthesized control by simulation
//! ([`simulate`]).

pub use nalgebra;

pub mod bsde;
pub mod catalog;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod reach;
pub mod riccati;
pub mod simulate;
pub mod structure;
pub mod target;

pub use error::{Error, Result};
pub use model::{SwitchedSystem, SystemSpec};
pub use structure::{HistoryField, HistoryIndex, ModeHistory, TimeGrid};
pub use target::TargetSpec;
