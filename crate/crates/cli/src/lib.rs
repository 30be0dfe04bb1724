//! Library side of the `decorrel` command-line tool: ingestion,
//! configuration, command implementations and error reporting.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use config::AnalysisConfig;
pub use dataset::{ingest_csv, Dataset, IngestOptions};
pub use error::{CliError, CliResult};
