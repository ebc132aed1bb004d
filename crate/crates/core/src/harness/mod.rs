//! Run driver, bundle I/O and statistical validation.

pub mod config;
pub mod run;
pub mod stats;
pub mod validate;

pub use config::{ReportFormat, RunConfig, ScenarioSource, SimSettings};
pub use run::{run_simulation, simulate_all, LinkRecord, RunOptions, RunSummary};
pub use stats::{empirical_stats, EmpiricalStats};
pub use validate::{default_targets, validate, Target, TargetSpec, ValidationReport};
