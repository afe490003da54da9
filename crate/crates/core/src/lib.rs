//! Quantum metrics on group C*-algebras: groups, length functions, growth,
//! Lipschitz seminorms, smoothed cutoffs and state-space metric bounds.

pub mod algebra;
pub mod cutoff;
pub mod error;
pub mod group;
pub mod growth;
pub mod length;
pub mod metric;
pub mod operator;

pub use error::{QmError, Result};
