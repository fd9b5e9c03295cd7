//! Splits, metrics and evaluation reports.

pub mod diagnostics;
pub mod metrics;
pub mod report;
pub mod splits;

pub use diagnostics::{demand_trend_diagnostics, surplus_binned_mse, SurplusBin, TrendCoef, TrendDiagnostics};
pub use metrics::{auc, binomial_deviance, mse};
pub use report::{
    consolidate, default_sweep_sizes, evaluate, sample_size_sweep, EvalReport, Metric, MetricRecord, ReportRow,
};
pub use splits::{between_item_split, between_subject_split, stratified_holdout_split, Protocol, Split, SplitSpec};
