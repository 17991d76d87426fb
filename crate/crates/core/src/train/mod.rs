//! Loss, optimisation, the training loop, evaluation metrics in original
//! units, and the ablation, sweep and attention-census harnesses.

mod config;
mod harness;
mod metrics;
mod optim;
mod run;

pub use config::TrainConfig;
pub use harness::{
    attention_census, run_ablation_suite, run_joint_vs_single, run_sweep, train_and_evaluate, write_sweep_table, write_variant_table,
    CensusReport, Comparison, SweepParam, SweepValue, VariantRun,
};
pub use metrics::{metrics, pearson, Metrics, MetricsReport, OVERALL};
pub use optim::{adam_step, clip_global_norm, sgd_step, AdamConfig, AdamState, Optimizer};
pub use run::{
    check_compatible, evaluate, historical_average, predict_split, report_from_flat, train, write_history_csv,
    EpochRecord, TrainOutcome,
};
