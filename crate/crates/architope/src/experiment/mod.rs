//! Config-driven experiment harness: declarative configs, runners, and
//! deterministic CSV/JSON reports.

mod config;
pub mod report;
mod runner;

pub use config::{
    DiagnosticSection, ExperimentConfig, FitSection, GapDemoSection, LearnerConfig,
    MeasureConfig, MetricsSection, PartitionConfig, QuadratureConfig, TargetConfig,
    UpgradeSection, DIAGNOSTIC_FAMILIES,
};
pub use runner::{
    diagnostic_family, run_diagnostic, run_gap_demo, run_metrics, run_partition, run_upgrade,
    DiagnosticSummary, MetricsSummary, PartitionSummary, UpgradeSummary,
};
