//! Scalarization, augmented Lagrangian and dominance machinery.

pub mod archive;
pub mod dominance;
pub mod lagrangian;
pub mod scalarize;
pub mod solver;
mod types;

pub use archive::{read_points_csv, write_points_csv, ArchiveEntry, ParetoArchive};
pub use dominance::{
    dominates, eps_dominates, eps_nondominance_filter, pareto_filter, proper_pareto_certify,
};
pub use lagrangian::{
    al_grad_h, al_loss, al_sensitivity, al_update, al_value, kkt_residual, optimal_t, ALState, AlForm,
    AlSensitivity, MultiplierSchedule,
};
pub use scalarize::{chebyshev_select, chebyshev_value, wc_constraints, weighted_sum_select};
pub use solver::{solve, solve_weighted_sum, AlSolverConfig, MultiObjective, OuterRecord, SolveReport};
pub use types::{
    ObjectiveVector, PreferenceVector, ReferencePoint, ScalarizationConfig,
    DEFAULT_EPSILON_DISTURBANCE, SIMPLEX_TOL,
};
