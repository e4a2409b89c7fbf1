//! Semantic multi-task learning engine: a dense-network substrate, divergence
//! and re-weighting losses, centroid-based semantic matching, a simplex-
//! constrained task-relation solver, and the experiment harness behind the
//! `smtl` CLI.

// Index loops read better than iterator chains for the small dense matrices
// this crate is built around.
#![allow(clippy::needless_range_loop)]

pub mod alpha;
pub mod checkpoint;
pub mod data;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod optim;
pub mod reweight;
pub mod semantic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
