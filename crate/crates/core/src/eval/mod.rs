//! Metrics, resampling plans, tuning and the comparison study.

pub mod cv;
pub mod metrics;
pub mod screening;
pub mod study;
pub mod tuning;

pub use cv::{make_cv_plan, CvPlan};
pub use metrics::{auc, log_loss};
pub use screening::{efficiency_curve, random_envelope, screen_fold, EfficiencyCurve, Envelope, MANUAL_BASELINE};
pub use study::{run_study, run_task, summarize, FoldOutcome, ModelSummary, StudyConfig, TaskKey};
pub use tuning::{tune, tune_and_fit, GridScore, Tuned};
