//! Causal structure discovery, SCM-based synthesis of tabular data and
//! mixed real/synthetic fine-tuning with real-only validation.
//!
//! The crate is organised bottom-up:
//!
//! * [`table`]: typed tables, CSV ingestion, preprocessing, capped stratified splits.
//! * [`models`]: regressors, classifiers and density estimators.
//! * [`graph`]: DAGs and d-separation.
//! * [`discovery`]: conditional-independence tests, the PC algorithm and the
//!   discovery ensemble that yields a probabilistic adjacency matrix.
//! * [`scm`]: DAG sampling, additive-noise SCM fitting and sampling.
//! * [`generators`]: synthetic data arms and the real/synthetic batch mixer.
//! * [`finetune`]: reference classifier, mixed-objective training, metrics.
//! * [`bench`]: sweeps, aggregation and reports.

pub mod bench;
pub mod discovery;
pub mod finetune;
pub mod generators;
pub mod graph;
pub mod models;
pub mod rng;
pub mod scm;
pub mod table;

pub use table::{Column, ColumnKind, Schema, Table};
