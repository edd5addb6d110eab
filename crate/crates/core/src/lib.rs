//! Compressed-sensing recovery with pre-trained generative priors.
//!
//! Covers marginal generators `G(z)` and measurement-conditional generators
//! `G(z, y)` that take the measurement vector as an extra input during both
//! training and recovery, together with the sparse projected-gradient
//! recovery theory layer (restricted isometry checks, sample-size bound,
//! contraction audit).

pub mod error;
pub mod harness;
pub mod models;
pub mod numcore;
pub mod recovery;
pub mod rip;
pub mod sensing;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
