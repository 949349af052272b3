//! Experiment harness for distributed sufficient dimension reduction:
//! Monte-Carlo repetitions, CSV ingestion and results, timing sweeps and the
//! `dsdr` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod results;
pub mod timing;

pub use config::{DataSource, ExperimentConfig, PartitionKind, RunMode};
pub use error::{BenchError, IngestError, Result};
pub use experiment::{estimate, run_experiment, run_repetitions, Estimation};
pub use ingest::{load_csv, ColumnRef};
pub use results::{emit_results, read_results, RepLabel, ResultRow, ResultTable};
pub use timing::{timing_sweep, TimingGrid};
