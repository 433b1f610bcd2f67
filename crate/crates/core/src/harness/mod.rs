//! Cross-validation protocol, metrics and reports.

mod folds;
mod metrics;
mod report;
mod run;

pub use folds::{make_folds, make_folds_for, FoldAssignment};
pub use metrics::{compute_metrics, f1, ClassMetrics, MacroMetrics, MetricsRecord};
pub use report::{report_json, summary_rows, write_summary_csv, SummaryRow};
pub use run::{
    run_in_dataset, run_in_dataset_traced, run_out_of_dataset, run_out_of_dataset_traced,
    EvalReport, EvalSettings, FoldResult, FoldTrace, ProvenanceBreakdown, SkippedFold,
};
