//! Ranking metrics, the F-beta measure and the experiment harness.

mod experiment;
mod metrics;
mod plot;

pub use experiment::{CellOutcome, ExperimentPlan, ExperimentReport, PRESETS, run_experiment};
pub use metrics::{MetricReport, Subset, auc_pr, auroc, evaluate, f_beta};
pub use plot::{pr_curve_svg, score_timeline_svg};
