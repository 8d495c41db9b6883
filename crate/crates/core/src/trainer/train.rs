use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PhaseConfig, TUpdate, TrainConfig};
use super::metrics::{compute_metrics, evaluate, MetricsRecord};
use crate::cluster::{cluster_layer, tie_clusters, ClusterAssignment};
use crate::error::{domain, Error, Result};
use crate::growl::{layer_sparsity, prox_growl, threshold_rows_capped, zero_rows, GrowlPattern, SparsityBudget};
use crate::moo::{al_update, chebyshev_value, ALState, MultiplierSchedule, ScalarizationConfig};
use crate::net::{al_objective, backward, growl_patterns, lsuv_init, AlObjective, Model, ModelSpec, TaskBatch};

#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: TaskBatch,
    pub val: TaskBatch,
    pub test: TaskBatch,
}

impl DataSplits {
    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        for (name, b) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            b.validate()?;
            if b.is_empty() {
                return domain(format!("{name} split is empty"));
            }
            if b.labels.len() != n_tasks {
                return Err(Error::Shape(format!(
                    "{name} split has {} label columns, model has {n_tasks} tasks",
                    b.labels.len()
                )));
            }
        }
        Ok(())
    }
}

/// One epoch of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub phase: u8,
    /// Outer iteration, counted across both phases from 1.
    pub iteration: usize,
    pub epoch: usize,
    /// `(L_0, L_1, ..., L_m)` on the full training split.
    pub objectives: Vec<f64>,
    pub t: f64,
    pub max_h: f64,
    pub mu: f64,
    pub sr: f64,
    pub val_accuracy: Vec<f64>,
}

/// Writes the run log as CSV with columns
/// `phase,iteration,epoch,L0..Lm,t,max_H,mu,SR,val_acc1..val_accm`.
pub fn write_run_log<W: Write>(w: W, rows: &[LogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n_obj = rows.first().map_or(0, |r| r.objectives.len());
    let mut header: Vec<String> = vec!["phase".into(), "iteration".into(), "epoch".into()];
    header.extend((0..n_obj).map(|i| format!("L{i}")));
    header.extend(["t", "max_H", "mu", "SR"].map(String::from));
    header.extend((1..n_obj).map(|i| format!("val_acc{i}")));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.phase.to_string(), r.iteration.to_string(), r.epoch.to_string()];
        rec.extend(r.objectives.iter().map(|v| v.to_string()));
        rec.extend([r.t, r.max_h, r.mu, r.sr].map(|v| v.to_string()));
        rec.extend(r.val_accuracy.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub model: Model,
    pub clusters: BTreeMap<String, ClusterAssignment>,
    pub log: Vec<LogRow>,
    /// Whether some epoch met the saving rule; otherwise `model` is the
    /// last iterate.
    pub saved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub clusters: BTreeMap<String, ClusterAssignment>,
    pub log: Vec<LogRow>,
    /// Metrics of the final model with test-split accuracy.
    pub metrics: MetricsRecord,
    pub phase1_saved: bool,
}

struct Runner<'a> {
    cfg: &'a TrainConfig,
    scal: &'a ScalarizationConfig,
    data: &'a DataSplits,
    patterns: Vec<Option<GrowlPattern>>,
    rng: ChaCha8Rng,
    log: Vec<LogRow>,
}

impl<'a> Runner<'a> {
    fn new(model: &Model, data: &'a DataSplits, cfg: &'a TrainConfig, scal: &'a ScalarizationConfig, salt: u64) -> Result<Self> {
        cfg.validate()?;
        scal.validate()?;
        if scal.n_objectives() != model.n_tasks() + 1 {
            return Err(Error::Shape(format!(
                "preference has {} entries, model needs {} (sparsity plus tasks)",
                scal.n_objectives(),
                model.n_tasks() + 1
            )));
        }
        data.validate(model.n_tasks())?;
        Ok(Self {
            cfg,
            scal,
            data,
            patterns: growl_patterns(&model.params, &cfg.growl)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(salt)),
            log: Vec::new(),
        })
    }

    fn sparsify_enabled(&self) -> bool {
        self.scal.preference.values()[0] > 0.0
    }

    fn objective<'b>(&'b self, state: &'b ALState) -> AlObjective<'b> {
        AlObjective {
            cfg: self.scal,
            state,
            patterns: &self.patterns,
            growl_subgradient: self.sparsify_enabled(),
            exact_t: self.cfg.t_update == TUpdate::Exact,
        }
    }

    /// One shuffled pass over the training split.
    fn epoch(
        &mut self,
        model: &mut Model,
        t: &mut f64,
        state: &ALState,
        opt: &mut crate::net::Optimizer,
        lr: f64,
        masks: &[Vec<usize>],
    ) -> Result<()> {
        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        order.shuffle(&mut self.rng);
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch = self.data.train.select(chunk);
            let (eval, grad) = backward(model, &batch, *t, &self.objective(state))?;
            let mut flat = model.params.to_flat();
            flat.push(eval.t);
            let mut g = grad.to_flat();
            g.push(grad.t);
            opt.step(&mut flat, &g, lr)?;
            *t = flat.pop().unwrap_or(eval.t);
            model.params.set_flat(&flat)?;
            for (layer, rows) in model.params.layers.iter_mut().zip(masks) {
                for &r in rows {
                    layer.weight.row_mut(r).fill(0.0);
                }
            }
        }
        if !t.is_finite() {
            return Err(Error::Numeric("scalarization variable t diverged".into()));
        }
        Ok(())
    }

    fn within_ceiling(&self, model: &Model) -> bool {
        model
            .params
            .layers
            .iter()
            .zip(&self.patterns)
            .filter(|(_, p)| p.is_some())
            .all(|(l, _)| layer_sparsity(l.weight.view()) <= self.cfg.budget.eta_max)
    }

    fn record(
        &mut self,
        phase: u8,
        iteration: usize,
        epoch: usize,
        model: &Model,
        t: f64,
        state: &ALState,
        clusters: &BTreeMap<String, ClusterAssignment>,
    ) -> Result<(LogRow, f64)> {
        let eval = al_objective(model, &self.data.train, t, &self.objective(state))?;
        let acc = evaluate(model, &self.data.val)?;
        let sr = compute_metrics(model, clusters).sr;
        let row = LogRow {
            phase,
            iteration,
            epoch,
            objectives: eval.objectives,
            t: eval.t,
            max_h: eval.h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mu: state.mu,
            sr,
            val_accuracy: acc.per_task,
        };
        self.log.push(row.clone());
        Ok((row, acc.average))
    }

    /// Outer-iteration prologue: objectives on the full training split, the
    /// reference-point check and the `t` reset.
    fn reset_t(&self, model: &Model, state: &ALState) -> Result<f64> {
        let eval = al_objective(model, &self.data.train, state.t, &self.objective(state))?;
        self.scal.reference.check_below(&eval.objectives)?;
        Ok(chebyshev_value(&eval.objectives, self.scal))
    }

    fn close_iteration(&self, model: &Model, t: f64, state: &ALState) -> Result<ALState> {
        let eval = al_objective(model, &self.data.train, t, &self.objective(state))?;
        let schedule = MultiplierSchedule {
            mu_factor: self.cfg.mu_factor,
        };
        let mut next = al_update(&eval.h, &ALState { t: eval.t, ..state.clone() }, &schedule)?;
        next.t = eval.t;
        Ok(next)
    }

    /// With every constraint strictly inactive the parameters receive no
    /// gradient; lowering `t` to the largest constraint value makes it tight.
    fn restore_tight(&self, t: f64, max_h: f64) -> f64 {
        if self.cfg.t_update == TUpdate::Optimizer && max_h < 0.0 {
            t + max_h
        } else {
            t
        }
    }

    fn fresh_state(&self) -> Result<ALState> {
        Ok(ALState::new(self.scal.n_objectives(), self.cfg.mu0)?.with_form(self.cfg.al_form))
    }
}

/// Proximal GrOWL step followed by capped row thresholding on every layer
/// with a pattern. A layer whose prox output would exceed `eta_max` keeps its
/// pre-prox weights; thresholding then zeroes sub-`tau` rows in order of
/// increasing norm up to the `eta_max` cap. Layers without a pattern are
/// not touched.
pub fn sparsify(
    model: &mut Model,
    patterns: &[Option<GrowlPattern>],
    step: f64,
    budget: &SparsityBudget,
) -> Result<()> {
    if patterns.len() != model.params.layers.len() {
        return Err(Error::Shape("one GrOWL pattern slot per layer is required".into()));
    }
    for (layer, p) in model.params.layers.iter_mut().zip(patterns) {
        let Some(p) = p else { continue };
        let prox = prox_growl(layer.weight.view(), p, step)?;
        let base = if layer_sparsity(prox.view()) > budget.eta_max { layer.weight.clone() } else { prox };
        let cap = (budget.eta_max * layer.weight.nrows() as f64 + 1e-9).floor() as usize;
        layer.weight = threshold_rows_capped(base.view(), budget.tau, cap)?.0;
        if zero_rows(layer.weight.view()).len() == layer.weight.nrows() {
            return domain(format!("every row of {} was pruned; lower eta_max or tau", layer.name));
        }
    }
    Ok(())
}

/// Share of the augmented Lagrangian gradient carried by the sparsity
/// objective, in `[0, 1]`.
fn sparsity_weight(model: &Model, data: &TaskBatch, t: f64, obj: &AlObjective) -> Result<f64> {
    let c = al_objective(model, data, t, obj)?.sensitivity.objective;
    let total: f64 = c.iter().sum();
    Ok(if total > 0.0 { (c[0] / total).clamp(0.0, 1.0) } else { 0.0 })
}

fn lr_at(phase: &PhaseConfig, iteration: usize) -> f64 {
    phase.lr * phase.lr_factor.powi(iteration as i32)
}

/// First training phase: AL iterations with proximal GrOWL steps, keeping
/// the most accurate model that meets the sparsity budget, then clustering
/// of every regularized layer.
pub fn train_phase1(
    model: Model,
    data: &DataSplits,
    cfg: &TrainConfig,
    scal: &ScalarizationConfig,
) -> Result<Phase1Outcome> {
    let mut run = Runner::new(&model, data, cfg, scal, 1)?;
    let enabled = run.sparsify_enabled();
    let eta_min = if enabled { cfg.budget.eta_min } else { 0.0 };
    let mut model = model;
    let mut state = run.fresh_state()?;
    let mut opt = cfg.optimizer.build(model.params.flat_len() + 1);
    let masks = vec![Vec::new(); model.params.layers.len()];
    let empty = BTreeMap::new();
    let mut best: Option<(f64, Model)> = None;

    for it in 0..cfg.phase1.iterations {
        let lr = lr_at(&cfg.phase1, it);
        let mut t = run.reset_t(&model, &state)?;
        for ep in 0..cfg.phase1.epochs {
            run.epoch(&mut model, &mut t, &state, &mut opt, lr, &masks)?;
            if enabled {
                let w0 = sparsity_weight(&model, &data.train, t, &run.objective(&state))?;
                if w0 > 0.0 {
                    sparsify(&mut model, &run.patterns, lr * w0, &cfg.budget)?;
                }
            }
            let (row, avg) = run.record(1, it + 1, ep + 1, &model, t, &state, &empty)?;
            t = run.restore_tight(t, row.max_h);
            let eligible = row.sr >= eta_min && run.within_ceiling(&model);
            if eligible && best.as_ref().is_none_or(|(b, _)| avg > *b) {
                best = Some((avg, model.clone()));
            }
        }
        state = run.close_iteration(&model, t, &state)?;
    }

    let saved = best.is_some();
    let model = best.map_or(model, |(_, m)| m);
    let mut clusters = BTreeMap::new();
    for (layer, p) in model.params.layers.iter().zip(&run.patterns) {
        if p.is_none() {
            continue;
        }
        let c = if enabled {
            cluster_layer(layer.weight.view(), &cfg.clustering)?
        } else {
            ClusterAssignment::singletons(layer.weight.view())
        };
        clusters.insert(layer.name.clone(), c);
    }
    Ok(Phase1Outcome {
        model,
        clusters,
        log: run.log,
        saved,
    })
}

/// Second training phase: retraining with pruned rows held at zero and
/// clustered rows tied after every epoch. Returns the final model and its
/// log rows, numbered after `iteration_offset` phase-one iterations.
pub fn train_phase2(
    p1: &Phase1Outcome,
    data: &DataSplits,
    cfg: &TrainConfig,
    scal: &ScalarizationConfig,
    iteration_offset: usize,
) -> Result<(Model, Vec<LogRow>)> {
    let mut model = p1.model.clone();
    let mut run = Runner::new(&model, data, cfg, scal, 2)?;
    let masks: Vec<Vec<usize>> = model
        .params
        .layers
        .iter()
        .map(|l| if l.growl { zero_rows(l.weight.view()) } else { Vec::new() })
        .collect();
    let mut state = run.fresh_state()?;
    let mut opt = cfg.optimizer.build(model.params.flat_len() + 1);

    for it in 0..cfg.phase2.iterations {
        let lr = lr_at(&cfg.phase2, it);
        let mut t = run.reset_t(&model, &state)?;
        for ep in 0..cfg.phase2.epochs {
            run.epoch(&mut model, &mut t, &state, &mut opt, lr, &masks)?;
            for layer in &mut model.params.layers {
                if let Some(c) = p1.clusters.get(&layer.name) {
                    layer.weight = tie_clusters(layer.weight.view(), c)?;
                }
            }
            let (row, _) = run.record(2, iteration_offset + it + 1, ep + 1, &model, t, &state, &p1.clusters)?;
            t = run.restore_tight(t, row.max_h);
        }
        state = run.close_iteration(&model, t, &state)?;
    }
    Ok((model, run.log))
}

/// LSUV initialization followed by both phases. The returned metrics use
/// the test split.
pub fn train(
    spec: &ModelSpec,
    data: &DataSplits,
    cfg: &TrainConfig,
    scal: &ScalarizationConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.validate(spec.n_tasks())?;
    let probe_rows: Vec<usize> = (0..data.train.len().min(512)).collect();
    let probe = data.train.select(&probe_rows);
    let model = lsuv_init(spec, probe.inputs.view(), &cfg.lsuv, cfg.seed)?;
    train_from(model, data, cfg, scal)
}

/// Both phases starting from an initialized model.
pub fn train_from(
    model: Model,
    data: &DataSplits,
    cfg: &TrainConfig,
    scal: &ScalarizationConfig,
) -> Result<TrainOutcome> {
    let p1 = train_phase1(model, data, cfg, scal)?;
    let (model, log2) = train_phase2(&p1, data, cfg, scal, cfg.phase1.iterations)?;
    let metrics = compute_metrics(&model, &p1.clusters).with_accuracy(evaluate(&model, &data.test)?);
    let mut log = p1.log;
    log.extend(log2);
    Ok(TrainOutcome {
        model,
        clusters: p1.clusters,
        log,
        metrics,
        phase1_saved: p1.saved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{make_dataset, SyntheticConfig};
    use crate::moo::PreferenceVector;

    fn small() -> (ModelSpec, DataSplits, TrainConfig) {
        let data = make_dataset(&SyntheticConfig {
            samples: 400,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = TrainConfig::synthetic();
        cfg.phase1 = PhaseConfig {
            iterations: 2,
            epochs: 3,
            ..cfg.phase1
        };
        cfg.phase2 = PhaseConfig {
            iterations: 2,
            epochs: 1,
            ..cfg.phase2
        };
        (ModelSpec::mdmtn(16, vec![4, 4]), data, cfg)
    }

    fn scal(k0: f64) -> ScalarizationConfig {
        let r = (1.0 - k0) / 2.0;
        ScalarizationConfig::new(PreferenceVector::new(vec![k0, r, r]).unwrap())
    }

    #[test]
    fn zero_sparsity_weight_is_plain_training() {
        let (spec, data, cfg) = small();
        let out = train(&spec, &data, &cfg, &scal(0.0)).unwrap();
        assert_eq!(out.metrics.sr, 0.0);
        assert_eq!((out.metrics.cr, out.metrics.ps), (1.0, 1.0));
        assert!(out.clusters.values().all(|c| !c.has_ties()));
    }

    #[test]
    fn saved_model_meets_budget_and_phase2_keeps_support() {
        let (spec, data, mut cfg) = small();
        cfg.phase1.epochs = 10;
        cfg.budget.eta_min = 0.1;
        let s = scal(1e-2);
        let probe = data.train.select(&(0..256).collect::<Vec<_>>());
        let model = lsuv_init(&spec, probe.inputs.view(), &cfg.lsuv, cfg.seed).unwrap();
        let p1 = train_phase1(model, &data, &cfg, &s).unwrap();
        assert!(p1.saved, "no epoch met the sparsity floor");
        let m = compute_metrics(&p1.model, &BTreeMap::new());
        assert!(m.sr >= cfg.budget.eta_min, "{}", m.sr);
        for l in p1.model.params.layers.iter().filter(|l| l.growl) {
            assert!(layer_sparsity(l.weight.view()) <= cfg.budget.eta_max);
        }

        let (fin, log) = train_phase2(&p1, &data, &cfg, &s, cfg.phase1.iterations).unwrap();
        assert_eq!(log.first().unwrap().iteration, cfg.phase1.iterations + 1);
        for (before, after) in p1.model.params.layers.iter().zip(&fin.params.layers) {
            let kept = zero_rows(after.weight.view());
            assert!(zero_rows(before.weight.view()).iter().all(|r| kept.contains(r)), "{}", before.name);
            if let Some(c) = p1.clusters.get(&after.name) {
                for g in c.tied_groups() {
                    for &r in &g[1..] {
                        assert_eq!(after.weight.row(r), after.weight.row(g[0]));
                    }
                }
            }
        }
    }

    #[test]
    fn reproducible() {
        let (spec, data, cfg) = small();
        let a = train(&spec, &data, &cfg, &scal(1e-3)).unwrap();
        let b = train(&spec, &data, &cfg, &scal(1e-3)).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model.params.to_flat(), b.model.params.to_flat());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn run_log_header() {
        let row = LogRow {
            phase: 1,
            iteration: 1,
            epoch: 2,
            objectives: vec![0.5, 1.0, 2.0],
            t: 0.25,
            max_h: -0.1,
            mu: 10.0,
            sr: 0.0,
            val_accuracy: vec![0.9, 0.8],
        };
        let mut buf = Vec::new();
        write_run_log(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "phase,iteration,epoch,L0,L1,L2,t,max_H,mu,SR,val_acc1,val_acc2");
        assert_eq!(lines.next().unwrap(), "1,1,2,0.5,1,2,0.25,-0.1,10,0,0.9,0.8");
    }

    #[test]
    fn mismatched_preference_rejected() {
        let (spec, data, cfg) = small();
        let s = ScalarizationConfig::new(PreferenceVector::new(vec![0.5, 0.5]).unwrap());
        assert!(matches!(train(&spec, &data, &cfg, &s), Err(Error::Shape(_))));
    }
}
