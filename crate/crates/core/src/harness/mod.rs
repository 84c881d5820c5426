//! Configured experiments, reports and the acceptance suite behind the CLI.

pub mod config;
pub mod engine;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat, TestVectorSpec};
pub use engine::{ratio_report, run_experiment, with_workers};
pub use report::{Report, ReportRow, Verdict};
pub use verify::verify;
