//! Experiment harness: JSON experiment configs, grid execution with per-run
//! artifacts, result tables, and post-hoc run diagnostics.

pub mod config;
pub mod diagnostics;
pub mod runner;
pub mod table;
