//! The training loop, the ERM baseline, the loss ablation and the
//! tail-averaging variant of the category parameters.

mod ablation;
mod config;
mod report;
mod swad;
mod trainer;

pub use ablation::{mean_std, run_ablation, summarize, trial_pool, AblationRow, AblationSummary, THREADS_ENV};
pub use config::{SwadConfig, TrainConfig, Variant, LOG_EVERY};
pub use report::{read_metrics_csv, write_metrics_csv, MetricsRow, TrialReport, METRICS_HEADER, OPTIMIZER_NOTE};
pub use swad::{SwadPhase, SwadState, SwadSummary};
pub use trainer::{
    accuracy, evaluate_accuracy, run_trial, train, train_domain_model, train_erm, train_poem, Trial,
    TrainOutcome,
};
