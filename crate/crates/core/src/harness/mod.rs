//! Synthetic data, cross-validation, metrics and the baseline-versus-pipeline experiment.

mod experiment;
mod folds;
mod metrics;
mod synthetic;
mod welch;

pub use experiment::{
    run_experiment, run_fold, render_report, set_probabilities, ComboReport, ExperimentReport, ExperimentSettings,
    FoldScore, MethodScore, PipelineConfig, Summary,
};
pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{auroc, evaluate, EvalReport, LabelMetrics};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use welch::{welch_t, WelchResult};
