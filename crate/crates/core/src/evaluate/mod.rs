//! Task labels, evaluation protocols, metrics and reports.

mod harness;
mod labels;
mod metrics;
mod report;

pub use harness::{
    evaluate, evaluate_with_audit, run_subject_dependent, run_subject_independent, trial_seed,
    EvalConfig, EvalModality, Scenario, TrialAudit,
};
pub use labels::{derive_labels, Exclusion, LabeledExamples, Task, TaskSpec, RATING_THRESHOLD};
pub use metrics::{accuracy, balanced_accuracy, symmetric_f_measure, t_test_vs_chance};
pub use report::{
    format_summary, write_summary_csv, EvaluationReport, FusionSummary, FusionTrial, MetricSet,
    MetricSummary, ModalitySummary, ModalityTrial, RepMetrics, SubjectSummary, TrialRecord,
};
