//! Oracles, configuration, the end-to-end pipeline and its artifacts.

pub mod config;
pub mod oracle;
pub mod pipeline;
pub mod report;

pub use config::Config;
pub use oracle::{oracle_distance, DistanceOracle, OracleError, OracleMethod};
pub use pipeline::{run_pipeline, run_stage, PipelineError, PipelineOptions, PipelineOutput, QueryPlan, Stage};
pub use report::{Thresholds, ValidationReport};
