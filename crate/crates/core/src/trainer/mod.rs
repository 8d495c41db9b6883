//! Two-phase training: sparsify under the Chebyshev-scalarized objective,
//! then retrain with pruned rows frozen and similar rows tied.

pub mod config;
pub mod metrics;
pub mod train;

pub use config::{PhaseConfig, TUpdate, TrainConfig};
pub use metrics::{compute_metrics, count_params, evaluate, Accuracy, MetricsRecord, ParamCounts};
pub use train::{
    sparsify, train, train_from, train_phase1, train_phase2, write_run_log, DataSplits, LogRow, Phase1Outcome,
    TrainOutcome,
};
