//! Simulation and exact verification of recursive-resampling dynamics on
//! finite sample spaces.
//!
//! Each generation draws `N` samples, every one of them independently from
//! either a fixed source law `mu0` (probability `a`), the current parametric
//! model `theta` (probability `(1 - a) b`) or the current empirical measure
//! `mu` (probability `(1 - a) c`). The empirical measure of the batch becomes
//! the next `mu` and the parametric sub-batch refits `theta`.
//!
//! With `a > 0` the chain keeps its mean at `mu0` but grows noisier; with
//! `a = 0` it is absorbed at a random Dirac measure in finite time. The
//! [`oracle`] module computes both behaviours exactly on small instances and
//! the [`diagnostics`] module checks the simulator against them.

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod measure;
pub mod oracle;

pub use diagnostics::{EnsembleStats, ResidualReport};
pub use dynamics::{
    BatchRecord, ExperimentConfig, GenerationState, RngStream, SourceChoice, SourceTag,
    TrajectoryRecord,
};
pub use error::{Error, Result};
pub use measure::{ProbVector, Support, TestFunction};
pub use oracle::{CountComposition, OracleChain};
