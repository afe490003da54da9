//! Experiment runner for Dirac-commutator seminorms and state distances on group algebras.

pub mod config;
pub mod output;
pub mod run;
