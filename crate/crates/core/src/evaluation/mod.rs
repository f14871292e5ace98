//! Metrics, split protocol and benchmark reports.

pub mod benchmark;
pub mod metrics;
pub mod splits;

pub use benchmark::{
    read_repeats_csv, run_benchmark, summary_table, write_repeats_csv, BenchTask, BenchmarkConfig, BenchmarkReport,
    Labelings, Metric, MetricSummary, Selection,
};
pub use metrics::{
    accuracy, average_ranks, balanced_accuracy, label_accuracy, mae_ordinal, mze, plcc, plcc_logistic, rmse, srcc,
    ConfusionCounts, Logistic4,
};
pub use splits::{kfold, make_splits, Split, SplitPlan};
