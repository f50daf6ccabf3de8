//! Soft voxel robots with ballistic (open-loop, genetically fixed)
//! morphological development, and the evolutionary machinery used to compare
//! developing against non-developing bodies.
//!
//! The pipeline, bottom-up:
//!
//! * [`genome`] — 24 mirrored genes, each a starting and final resting
//!   length, plus the actuation and development laws.
//! * [`physics`] — a mass–spring voxel lattice on a frictional ground plane.
//! * [`fitness`] — lifetime simulation and volume-normalised displacement.
//! * [`evolution`] — age–fitness Pareto optimisation with the gene-pair
//!   mutation operator.
//! * [`analysis`] — random-search baselines, development windows, lineages,
//!   mutation impact, sweeps and the Mann–Whitney U test.
//! * [`config`], [`records`], [`cli`] — experiment files, persisted run
//!   artifacts and the batch commands behind the `softbot` binary.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod evolution;
pub mod fitness;
pub mod genome;
pub mod physics;
pub mod records;

pub use config::ExperimentConfig;
pub use evolution::{Individual, MutationConfig, Population, RunRecord};
pub use fitness::{evaluate, EvalMode, FitnessTrace};
pub use genome::{ActuationParams, Gene, Genome, Mode};
pub use physics::{PhysicsState, SimConfig};

use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("value out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Corrupt { path: PathBuf, line: u64, message: String },
    #[error("missing ancestor: individual {0} is not in the records")]
    MissingAncestor(u64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.into(), message: err.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
