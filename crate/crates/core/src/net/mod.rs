//! Dense multi-task networks: layout, forward and backward passes,
//! initialization, optimizers and checkpoints.

pub mod backward;
pub mod checkpoint;
pub mod loss;
pub mod lsuv;
pub mod model;
pub mod optim;

pub use backward::{
    al_objective, backward, growl_objective, growl_patterns, task_gradient, AlEval, AlObjective, Gradient,
    LayerGrad,
};
pub use checkpoint::{load_model, read_checkpoint, save_model, write_checkpoint, CheckpointHeader, CheckpointKind};
pub use loss::{predictions, task_losses};
pub use lsuv::{lsuv_init, LsuvConfig};
pub use model::{
    forward_hps, forward_mdmtn, Architecture, Layer, Model, ModelSpec, ParamStore, Role, Stack, TaskBatch,
};
pub use optim::{adam_step, sgd_step, Optimizer, OptimizerKind};
