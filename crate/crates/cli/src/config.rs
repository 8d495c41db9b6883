use std::path::{Path, PathBuf};

use pareto_forge::bench::{problem_by_name, AnalyticProblem, SweepPlan, SyntheticConfig};
use pareto_forge::moo::{AlSolverConfig, PreferenceVector, ReferencePoint, DEFAULT_EPSILON_DISTURBANCE};
use pareto_forge::{ModelSpec, ScalarizationConfig, TrainConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// What a run optimises: an analytic test problem or a network on the
/// synthetic two-task dataset.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Analytic {
        problem: String,
        #[serde(default)]
        solver: AlSolverConfig,
        /// Start point; drawn from the seed when absent.
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
    Model {
        #[serde(default = "default_spec")]
        spec: ModelSpec,
        #[serde(default)]
        data: SyntheticConfig,
        #[serde(default)]
        train: TrainConfig,
    },
}

fn default_spec() -> ModelSpec {
    let d = SyntheticConfig::default();
    ModelSpec::mdmtn(d.input_dim, d.classes.to_vec())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarizationSection {
    pub k: Vec<f64>,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    #[serde(default = "default_disturbance")]
    pub epsilon_disturbance: f64,
}

fn default_disturbance() -> f64 {
    DEFAULT_EPSILON_DISTURBANCE
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub task: Task,
    pub scalarization: ScalarizationSection,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub task: Task,
    pub plan: SweepPlan,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// A task with its problem or model checked and built.
pub enum Resolved {
    Analytic {
        problem: Box<dyn AnalyticProblem>,
        solver: AlSolverConfig,
        start: Option<Vec<f64>>,
    },
    Model {
        spec: ModelSpec,
        data: SyntheticConfig,
        train: TrainConfig,
    },
}

impl Resolved {
    pub fn n_objectives(&self) -> usize {
        match self {
            Resolved::Analytic { problem, .. } => problem.n_objectives(),
            Resolved::Model { spec, .. } => spec.n_tasks() + 1,
        }
    }
}

impl Task {
    pub fn resolve(self) -> CliResult<Resolved> {
        match self {
            Task::Analytic { problem, solver, start } => {
                let problem = problem_by_name(&problem).map_err(CliError::from_core)?;
                if solver.max_outer == 0 || solver.inner_max_iter == 0 || !(solver.mu0 > 0.0) {
                    return Err(CliError::config("solver: max_outer, inner_max_iter and mu0 must be positive"));
                }
                if let Some(x) = &start {
                    if x.len() != problem.dim() {
                        return Err(CliError::config(format!(
                            "start: expected {} values, got {}",
                            problem.dim(),
                            x.len()
                        )));
                    }
                }
                Ok(Resolved::Analytic { problem, solver, start })
            }
            Task::Model { spec, data, train } => {
                spec.validate().map_err(|e| CliError::config(format!("spec: {e}")))?;
                data.validate().map_err(|e| CliError::config(format!("data: {e}")))?;
                train.validate().map_err(|e| CliError::config(format!("train: {e}")))?;
                if spec.input_dim != data.input_dim || spec.classes != data.classes {
                    return Err(CliError::config("spec: input_dim and classes must match the dataset"));
                }
                Ok(Resolved::Model { spec, data, train })
            }
        }
    }
}

impl ScalarizationSection {
    /// Builds the scalarization, naming the offending field on failure.
    pub fn build(&self, n_objectives: usize, fallback_reference: Vec<f64>) -> CliResult<ScalarizationConfig> {
        if self.k.len() != n_objectives {
            return Err(CliError::config(format!(
                "scalarization.k: expected {n_objectives} entries, got {}",
                self.k.len()
            )));
        }
        let k = PreferenceVector::new(self.k.clone())
            .map_err(|e| CliError::config(format!("scalarization.k: {e}")))?;
        let reference = self.reference.clone().unwrap_or(fallback_reference);
        if reference.len() != n_objectives || reference.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config(format!(
                "scalarization.reference: expected {n_objectives} finite values"
            )));
        }
        let cfg = ScalarizationConfig::new(k)
            .with_reference(ReferencePoint(reference))
            .with_epsilon(self.epsilon_disturbance);
        cfg.validate()
            .map_err(|e| CliError::config(format!("scalarization.epsilon_disturbance: {e}")))?;
        Ok(cfg)
    }
}
