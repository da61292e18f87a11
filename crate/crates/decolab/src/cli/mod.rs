//! Configuration ingestion, experiment orchestration, and deterministic
//! CSV/JSON output.

pub mod config;
pub mod csv;
pub mod report;
pub mod run;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, SnapshotOutput};
pub use report::RunReport;
pub use run::run;
