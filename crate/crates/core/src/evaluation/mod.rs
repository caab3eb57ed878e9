//! Reliability metrics, selective prediction, calibration and baselines.
//!
//! Positive class is unreliable (`1`) throughout.

pub mod calibration;
pub mod ensemble;
pub mod metrics;
pub mod report;
pub mod selective;

pub use calibration::{calibration, calibration_bin, Calibration, CalibrationBin};
pub use ensemble::{ensemble_baseline, EnsembleBaseline, EnsembleInput};
pub use metrics::{
    argmax_class, average_ranks, confusion_counts, confusion_metrics, majority_baseline, spearman,
    ConfusionCounts, ConfusionMetrics,
};
pub use report::{
    canonical_json, emit_report, evaluate, report_table, EvalOptions, EvaluationReport, TABLE_HEADER,
};
pub use selective::{
    error_binned_accuracy, selective_curve, ErrorBin, ErrorBinning, SelectivePoint, DEFAULT_CUTOFFS,
};
