//! Analytic test problems, the synthetic two-task dataset, preference
//! sweeps and front reports.

pub mod dataset;
pub mod problems;
pub mod report;
pub mod sweep;

pub use dataset::{make_dataset, SyntheticConfig, SyntheticTwoTaskDataset};
pub use problems::{analytic_problems, generational_distance, problem_by_name, AnalyticProblem, Concave2, Convex2, Sparse3};
pub use report::{front_report, FrontReport, FrontRow, SrCluster, SR_BIN_WIDTH};
pub use sweep::{
    analytic_job, model_job, sweep, vector_metrics, RunRecord, RunResult, RunStatus, SweepJob, SweepManifest,
    SweepOutcome, SweepPlan,
};
