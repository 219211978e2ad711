//! Evaluation protocol: random splits, error metrics, multi-run comparisons
//! with significance tests, the CSRR ablation, and synthetic data.

mod compare;
mod metrics;
mod split;
mod synth;

pub use compare::{
    ablation_arms, run_ablation, run_comparison, run_single, write_failures, write_pairwise, write_plot_data,
    write_summary, Arm, ComparisonReport, ExperimentInputs, FailedRun, PairwiseRow, Protocol, RunSample, SingleRun,
    SummaryRow,
};
pub use metrics::{evaluate, from_residuals, mae, rmse, EvalOptions, Metric, Metrics};
pub use split::{derive_seed, split, SeedPurpose, SplitSpec};
pub use synth::{generate_synthetic, item_id, user_id, write_synthetic, SynthConfig, SyntheticData};
