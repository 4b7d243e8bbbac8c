//! Experiment grid, metrics, reports and file artifacts.

pub mod artifacts;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Method, MotionSuite};
pub use metrics::{
    evaluate_frame, foreground_mask, parse_metrics_csv, read_metrics_csv, write_metrics_csv, MetricsRecord, RecordKey,
    CSV_HEADER,
};
pub use report::{aggregate, ranking, report, report_records, AggregateRow, Aggregator, RankingRow, ReportOutput};
pub use run::{run_experiment, run_grid, Manifest, RunOutput};
