use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problems::AnalyticProblem;
use crate::error::{domain, Error, Result};
use crate::moo::{
    solve, AlSolverConfig, ArchiveEntry, ObjectiveVector, ParetoArchive, PreferenceVector, ReferencePoint,
    ScalarizationConfig, DEFAULT_EPSILON_DISTURBANCE,
};
use crate::net::{growl_objective, growl_patterns, save_model, task_losses, write_checkpoint, CheckpointHeader, CheckpointKind, ModelSpec};
use crate::trainer::{train, write_run_log, DataSplits, MetricsRecord, ParamCounts, TrainConfig};

/// Preference vectors to solve: for every `k0` in the grid, evenly spaced
/// points on the slice `k1 + ... + km = 1 - k0` of the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub n_objectives: usize,
    pub k0_grid: Vec<f64>,
    pub samples_per_k0: usize,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    #[serde(default = "default_disturbance")]
    pub epsilon_disturbance: f64,
    /// Tolerance of the archive's nondominance filter.
    #[serde(default)]
    pub archive_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_disturbance() -> f64 {
    DEFAULT_EPSILON_DISTURBANCE
}

impl SweepPlan {
    /// Five `k0` values with 18 task-weight vectors each.
    pub fn standard_grid(n_objectives: usize) -> Self {
        Self {
            n_objectives,
            k0_grid: vec![0.0, 1e-1, 1e-2, 1e-3, 1e-4],
            samples_per_k0: 18,
            reference: None,
            epsilon_disturbance: DEFAULT_EPSILON_DISTURBANCE,
            archive_epsilon: 0.0,
            seed: 0,
        }
    }

    /// Bi-objective sweep with `n` evenly spaced weights `k = (s, 1 - s)`.
    pub fn bi_objective(n: usize) -> Self {
        let k0_grid = if n <= 1 {
            vec![0.5]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        Self {
            n_objectives: 2,
            k0_grid,
            samples_per_k0: 1,
            ..Self::standard_grid(2)
        }
    }

    /// The plan's reference point; the origin when unset.
    pub fn reference_point(&self) -> ReferencePoint {
        self.reference
            .clone()
            .map_or_else(|| ReferencePoint::zeros(self.n_objectives), ReferencePoint)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objectives < 2 {
            return domain("n_objectives must be >= 2");
        }
        if self.k0_grid.is_empty() || self.samples_per_k0 == 0 {
            return domain("k0_grid and samples_per_k0 must be nonempty");
        }
        if let Some(k0) = self.k0_grid.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return domain(format!("k0_grid entry {k0} is outside [0, 1]"));
        }
        if let Some(r) = &self.reference {
            if r.len() != self.n_objectives || r.iter().any(|v| !v.is_finite()) {
                return domain("reference must hold one finite value per objective");
            }
        }
        if !(self.epsilon_disturbance >= 0.0) || !(self.archive_epsilon >= 0.0) {
            return domain("epsilon_disturbance and archive_epsilon must be >= 0");
        }
        Ok(())
    }

    /// Every preference vector of the plan, in job order.
    pub fn preferences(&self) -> Result<Vec<PreferenceVector>> {
        self.validate()?;
        let m = self.n_objectives - 1;
        let slice = simplex_points(m, self.samples_per_k0);
        let mut out = Vec::new();
        for &k0 in &self.k0_grid {
            for w in &slice {
                let mut k = vec![k0];
                k.extend(w.iter().map(|v| v * (1.0 - k0)));
                out.push(PreferenceVector::new(k)?);
            }
        }
        Ok(out)
    }

    pub fn jobs(&self) -> Result<Vec<SweepJob>> {
        Ok(self
            .preferences()?
            .into_iter()
            .enumerate()
            .map(|(index, k)| SweepJob {
                index,
                seed: job_seed(self.seed, index),
                k,
            })
            .collect())
    }

    pub fn scalarization(&self, k: &PreferenceVector) -> ScalarizationConfig {
        ScalarizationConfig::new(k.clone())
            .with_reference(self.reference_point())
            .with_epsilon(self.epsilon_disturbance)
    }

    /// The plan with `reference` filled in from `fallback` when unset.
    pub fn with_default_reference(&self, fallback: Vec<f64>) -> Self {
        Self {
            reference: self.reference.clone().or(Some(fallback)),
            ..self.clone()
        }
    }
}

/// Evenly spaced points on the unit simplex in `m` dimensions. One point
/// for `m = 1`, a uniform grid of `n` points for `m = 2`, and the smallest
/// simplex lattice with at least `n` points beyond that.
fn simplex_points(m: usize, n: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0]],
        2 if n == 1 => vec![vec![0.5, 0.5]],
        2 => (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                vec![s, 1.0 - s]
            })
            .collect(),
        _ => {
            let mut h = 1;
            loop {
                let pts = lattice(m, h);
                if pts.len() >= n {
                    return pts;
                }
                h += 1;
            }
        }
    }
}

fn lattice(m: usize, h: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, h: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if m == 1 {
            cur.push(left as f64 / h as f64);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for i in 0..=left {
            cur.push(i as f64 / h as f64);
            rec(m - 1, left - i, h, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, h, h, &mut Vec::new(), &mut out);
    out
}

fn job_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepJob {
    pub index: usize,
    pub k: PreferenceVector,
    pub seed: u64,
}

/// What a single solve hands back to the collector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub objectives: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub index: usize,
    pub k: PreferenceVector,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RunResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Plan, per-run seeds and outcomes. Rewritten after every finished run so
/// an interrupted sweep can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub plan: SweepPlan,
    pub runs: Vec<RunRecord>,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.status == RunStatus::Failed)
    }

    /// Archive of every finished run.
    pub fn archive(&self) -> Result<ParetoArchive> {
        let mut archive = ParetoArchive::new(self.plan.archive_epsilon)?;
        for r in &self.runs {
            if let (RunStatus::Done, Some(res)) = (r.status, &r.result) {
                archive.insert(ArchiveEntry {
                    k: r.k.clone(),
                    objectives: ObjectiveVector::new(res.objectives.clone())?,
                    metrics: res.metrics.clone(),
                    checkpoint: res.checkpoint.clone(),
                })?;
            }
        }
        Ok(archive)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub manifest: SweepManifest,
    pub archive: ParetoArchive,
}

/// Runs every job of `plan` on at most `jobs` worker threads. Results reach a
/// single collector that keeps the manifest at `manifest_path` current.
/// Runs already marked done in an existing manifest for the same plan are
/// skipped; failed runs are recorded and the sweep carries on.
pub fn sweep<F>(plan: &SweepPlan, jobs: usize, manifest_path: Option<&Path>, run: F) -> Result<SweepOutcome>
where
    F: Fn(&SweepJob) -> Result<RunResult> + Sync,
{
    let all = plan.jobs()?;
    let mut records: BTreeMap<usize, RunRecord> = BTreeMap::new();
    if let Some(path) = manifest_path.filter(|p| p.exists()) {
        let old = SweepManifest::load(path)?;
        if old.plan != *plan {
            return domain(format!("manifest {} was written for a different plan", path.display()));
        }
        for r in old.runs {
            if r.status == RunStatus::Done {
                records.insert(r.index, r);
            }
        }
    }
    let pending: Vec<&SweepJob> = all.iter().filter(|j| !records.contains_key(&j.index)).collect();
    let snapshot = |records: &BTreeMap<usize, RunRecord>| SweepManifest {
        plan: plan.clone(),
        runs: records.values().cloned().collect(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let collected: Result<()> = std::thread::scope(|s| {
        s.spawn(|| {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, job| {
                    let record = match run(job) {
                        Ok(res) => RunRecord {
                            index: job.index,
                            k: job.k.clone(),
                            seed: job.seed,
                            status: RunStatus::Done,
                            result: Some(res),
                            error: None,
                        },
                        Err(e) => RunRecord {
                            index: job.index,
                            k: job.k.clone(),
                            seed: job.seed,
                            status: RunStatus::Failed,
                            result: None,
                            error: Some(e.to_string()),
                        },
                    };
                    let _ = tx.send(record);
                });
            });
        });
        for record in rx {
            records.insert(record.index, record);
            if let Some(path) = manifest_path {
                snapshot(&records).save(path)?;
            }
        }
        Ok(())
    });
    collected?;

    let manifest = snapshot(&records);
    if let Some(path) = manifest_path {
        manifest.save(path)?;
    }
    let archive = manifest.archive()?;
    Ok(SweepOutcome { manifest, archive })
}

/// SR, CR and PS of a decision vector read as a flat, untied parameter
/// block.
pub fn vector_metrics(x: &[f64]) -> MetricsRecord {
    let zero = x.iter().filter(|v| **v == 0.0).count();
    MetricsRecord::from_counts(ParamCounts {
        total: x.len(),
        zero,
        unique: x.len() - zero,
    })
}

/// One augmented Lagrangian solve of an analytic problem, using the
/// problem's own reference point when the plan has none. With `out_dir` set
/// the solution is written to `checkpoints/run_NNN.pfck` below it.
pub fn analytic_job(
    problem: &dyn AnalyticProblem,
    plan: &SweepPlan,
    solver: &AlSolverConfig,
    job: &SweepJob,
    out_dir: Option<&Path>,
) -> Result<RunResult> {
    let cfg = plan.with_default_reference(problem.reference()).scalarization(&job.k);
    let rep = solve(problem, &cfg, &problem.start(job.seed), solver)?;
    let mut metrics = vector_metrics(&rep.x).to_map();
    metrics.insert("max_H".into(), rep.max_h);
    metrics.insert("kkt_residual".into(), rep.kkt_residual);
    metrics.insert("converged".into(), if rep.converged { 1.0 } else { 0.0 });
    metrics.insert("outer_iterations".into(), rep.outer_iterations as f64);
    let checkpoint = match out_dir {
        Some(dir) => {
            let path = checkpoint_path(dir, job.index)?;
            let header = CheckpointHeader {
                kind: CheckpointKind::Analytic,
                n_values: rep.x.len(),
                spec: None,
                layers: Vec::new(),
                problem: Some(problem.name().to_string()),
                t: Some(rep.t),
                metrics: metrics.clone(),
                clusters: BTreeMap::new(),
            };
            write_checkpoint(&path, &header, &rep.x)?;
            Some(relative(dir, &path))
        }
        None => None,
    };
    Ok(RunResult {
        objectives: rep.objectives,
        metrics,
        checkpoint,
    })
}

/// One two-phase training run with the job's preference vector and seed.
/// Archive objectives are `(L_0, L_1, ..., L_m)` on the test split. With
/// `out_dir` set the model and its run log are written below it.
pub fn model_job(
    spec: &ModelSpec,
    data: &DataSplits,
    cfg: &TrainConfig,
    plan: &SweepPlan,
    job: &SweepJob,
    out_dir: Option<&Path>,
) -> Result<RunResult> {
    let cfg = TrainConfig {
        seed: job.seed,
        ..cfg.clone()
    };
    let out = train(spec, data, &cfg, &plan.scalarization(&job.k))?;
    let patterns = growl_patterns(&out.model.params, &cfg.growl)?;
    let mut objectives = vec![growl_objective(&out.model.params, &patterns)?];
    objectives.extend(task_losses(&out.model.forward(data.test.inputs.view())?, &data.test.labels)?);
    let metrics = out.metrics.to_map();
    let checkpoint = match out_dir {
        Some(dir) => {
            let path = checkpoint_path(dir, job.index)?;
            save_model(&path, &out.model, metrics.clone(), out.clusters.clone())?;
            let log = std::fs::File::create(path.with_extension("csv"))?;
            write_run_log(log, &out.log)?;
            Some(relative(dir, &path))
        }
        None => None,
    };
    Ok(RunResult {
        objectives,
        metrics,
        checkpoint,
    })
}

fn checkpoint_path(dir: &Path, index: usize) -> Result<PathBuf> {
    let sub = dir.join("checkpoints");
    std::fs::create_dir_all(&sub)?;
    Ok(sub.join(format!("run_{index:03}.pfck")))
}

fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}
