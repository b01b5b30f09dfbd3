//! Config-driven experiments: training runs, evaluation, figures, sweeps and reports.

pub mod config;
pub mod eval;
pub mod plots;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, RawConfig, StepSource};
pub use eval::{eval_test_metrics, Predictor, TestMetrics};
pub use plots::render_plots;
pub use report::{analyze_run, format_report, RunReport};
pub use run::{run_experiment, run_experiment_with, BlockTrace, MetricsRow, RunOutput, RunSummary, SnapshotRecord, Trainer};
pub use sweep::{sweep, Patch, SweepSummary};
