//! Constraint-based structure discovery.
//!
//! [`run_discovery_ensemble`] repeats PC on subsampled data with randomised
//! significance levels and aggregates the per-run graphs into a matrix of
//! directed-edge frequencies.

mod citest;
mod ensemble;
mod pc;

use thiserror::Error;

pub use citest::{fisher_z, CiTest, DSeparationOracle, FisherZ};
pub use ensemble::{
    run_discovery_ensemble, run_ensemble_with, write_run_reports, Denominator, EnsembleConfig,
    ProbAdjacency, RunAdjacency, RunReport,
};
pub use pc::{pc_orient, pc_skeleton, Cpdag, PcVariant, Skeleton, DIRECTED, UNDIRECTED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscoveryError {
    #[error("{rows} rows are too few for a conditioning set of size {cond}")]
    InsufficientRows { rows: usize, cond: usize },
    #[error("significance level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("discovery needs at least two columns, found {0}")]
    TooFewColumns(usize),
    #[error("run exceeded its time cap")]
    Timeout,
    #[error("none of the {0} discovery runs completed")]
    NoCompletedRuns(usize),
    #[error("table has missing cells; impute before discovery")]
    MissingValues,
    #[error("invalid discovery config: {0}")]
    InvalidConfig(String),
    #[error("invalid adjacency matrix: {0}")]
    InvalidMatrix(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), DiscoveryError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(DiscoveryError::InvalidAlpha(alpha))
    }
}
