//! Multi-objective training toolkit built around a modified weighted
//! Chebyshev scalarization solved by an augmented Lagrangian method.
//!
//! The crate is organised bottom-up:
//!
//! * [`moo`]: objective and preference types, scalarization, the augmented
//!   Lagrangian, dominance filters and the Pareto archive.
//! * [`growl`]: the group ordered weighted L1 sparsity objective and its
//!   proximal operator.
//! * [`cluster`]: row similarity, affinity propagation and parameter tying.
//! * [`net`]: a small dense multi-task network engine (MDMTN, HPS).
//! * [`trainer`]: the two-phase training loop and the compression metrics.
//! * [`bench`]: analytic test problems, a synthetic two-task dataset, the
//!   preference sweep harness and front reports.

pub mod bench;
pub mod cluster;
mod error;
pub mod growl;
pub mod moo;
pub mod net;
pub mod trainer;

pub use error::{Error, Result};
pub use moo::{
    ObjectiveVector, ParetoArchive, PreferenceVector, ReferencePoint, ScalarizationConfig,
};
pub use net::{Architecture, Model, ModelSpec};
pub use trainer::{MetricsRecord, TrainConfig};
