use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pareto_forge::bench::{
    analytic_job, front_report, make_dataset, model_job, problem_by_name, sweep, vector_metrics, SweepManifest,
    SR_BIN_WIDTH,
};
use pareto_forge::moo::{eps_nondominance_filter, read_points_csv, solve, write_points_csv, SolveReport};
use pareto_forge::net::checkpoint::model_from_checkpoint;
use pareto_forge::net::{
    growl_objective, growl_patterns, read_checkpoint, save_model, task_losses, write_checkpoint, CheckpointHeader,
    CheckpointKind,
};
use pareto_forge::trainer::{compute_metrics, train, write_run_log, MetricsRecord};
use pareto_forge::{ParetoArchive, ScalarizationConfig};
use serde_json::{json, Map, Value};

use crate::config::{read_json, Resolved, SolveConfig, SweepConfig};
use crate::error::{CliError, CliResult};

/// Values given on the command line; each one overrides the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

fn check_epsilon(eps: Option<f64>) -> CliResult<()> {
    match eps {
        Some(e) if !(e >= 0.0 && e.is_finite()) => Err(CliError::config(format!("--epsilon must be finite and >= 0, got {e}"))),
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> pareto_forge::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| CliError::output(path, e))?;
    w.flush().map_err(|e| CliError::output(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

fn metrics_value(m: &MetricsRecord) -> Map<String, Value> {
    match serde_json::to_value(m) {
        Ok(Value::Object(map)) => map,
        _ => Map::new(),
    }
}

pub fn solve_cmd(config: &Path, ov: &Overrides) -> CliResult<()> {
    check_epsilon(ov.epsilon)?;
    let mut cfg: SolveConfig = read_json(config)?;
    if let Some(e) = ov.epsilon {
        cfg.scalarization.epsilon_disturbance = e;
    }
    let out_dir = ov
        .out_dir
        .clone()
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::config("no output directory: set out_dir or pass --out-dir"))?;
    let task = cfg.task.resolve()?;
    let n = task.n_objectives();
    match task {
        Resolved::Analytic { problem, solver, start } => {
            let scal = cfg.scalarization.build(n, problem.reference())?;
            let seed = ov.seed.or(cfg.seed).unwrap_or(0);
            let x0 = start.unwrap_or_else(|| problem.start(seed));
            let rep = solve(problem.as_ref(), &scal, &x0, &solver).map_err(CliError::from_core)?;
            create_dir(&out_dir)?;
            write_analytic(&out_dir, problem.name(), &scal, &rep)
        }
        Resolved::Model { spec, data, train: mut tcfg } => {
            let scal = cfg.scalarization.build(n, vec![0.0; n])?;
            if let Some(s) = ov.seed.or(cfg.seed) {
                tcfg.seed = s;
            }
            let splits = make_dataset(&data).map_err(CliError::from_core)?;
            let out = train(&spec, &splits, &tcfg, &scal).map_err(CliError::from_core)?;
            let patterns = growl_patterns(&out.model.params, &tcfg.growl).map_err(CliError::from_core)?;
            let mut objectives = vec![growl_objective(&out.model.params, &patterns).map_err(CliError::from_core)?];
            let logits = out.model.forward(splits.test.inputs.view()).map_err(CliError::from_core)?;
            objectives.extend(task_losses(&logits, &splits.test.labels).map_err(CliError::from_core)?);

            create_dir(&out_dir)?;
            let ck = out_dir.join("checkpoint.pfck");
            save_model(&ck, &out.model, out.metrics.to_map(), out.clusters.clone())
                .map_err(|e| CliError::output(&ck, e))?;
            write_file(&out_dir.join("run_log.csv"), |w| write_run_log(w, &out.log))?;
            let mut m = metrics_value(&out.metrics);
            m.insert("kind".into(), json!("model"));
            m.insert("k".into(), json!(scal.preference.values()));
            m.insert("objectives".into(), json!(objectives));
            m.insert("phase1_saved".into(), json!(out.phase1_saved));
            m.insert("seed".into(), json!(tcfg.seed));
            write_json(&out_dir.join("metrics.json"), &Value::Object(m))
        }
    }
}

fn write_analytic(dir: &Path, name: &str, scal: &ScalarizationConfig, rep: &SolveReport) -> CliResult<()> {
    let record = vector_metrics(&rep.x);
    let mut header_metrics = record.to_map();
    header_metrics.insert("max_H".into(), rep.max_h);
    header_metrics.insert("kkt_residual".into(), rep.kkt_residual);
    let header = CheckpointHeader {
        kind: CheckpointKind::Analytic,
        n_values: rep.x.len(),
        spec: None,
        layers: Vec::new(),
        problem: Some(name.to_string()),
        t: Some(rep.t),
        metrics: header_metrics,
        clusters: BTreeMap::new(),
    };
    let ck = dir.join("checkpoint.pfck");
    write_checkpoint(&ck, &header, &rep.x).map_err(|e| CliError::output(&ck, e))?;

    write_file(&dir.join("run_log.csv"), |w| {
        let n = rep.objectives.len();
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["iteration".to_string()];
        head.extend((0..n).map(|i| format!("f{i}")));
        head.extend(["t", "max_H", "mu", "inner_iterations"].map(String::from));
        out.write_record(&head)?;
        for r in &rep.history {
            let mut rec = vec![r.iteration.to_string()];
            rec.extend(r.objectives.iter().map(|v| format!("{v:?}")));
            rec.extend([r.t, r.max_h, r.mu].map(|v| format!("{v:?}")));
            rec.push(r.inner_iterations.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })?;

    let mut m = metrics_value(&record);
    m.insert("kind".into(), json!("analytic"));
    m.insert("problem".into(), json!(name));
    m.insert("k".into(), json!(scal.preference.values()));
    m.insert("reference".into(), json!(scal.reference.values()));
    m.insert("objectives".into(), json!(rep.objectives));
    m.insert("x".into(), json!(rep.x));
    m.insert("t".into(), json!(rep.t));
    m.insert("max_H".into(), json!(rep.max_h));
    m.insert("kkt_residual".into(), json!(rep.kkt_residual));
    m.insert("outer_iterations".into(), json!(rep.outer_iterations));
    m.insert("converged".into(), json!(rep.converged));
    if !rep.converged {
        eprintln!("warning: the solve stopped before the KKT tolerance was met (max_H = {:e})", rep.max_h);
    }
    write_json(&dir.join("metrics.json"), &Value::Object(m))
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn sweep_cmd(config: &Path, ov: &Overrides) -> CliResult<()> {
    check_epsilon(ov.epsilon)?;
    let cfg: SweepConfig = read_json(config)?;
    let mut plan = cfg.plan;
    if let Some(s) = ov.seed {
        plan.seed = s;
    }
    if let Some(e) = ov.epsilon {
        plan.archive_epsilon = e;
    }
    plan.validate().map_err(|e| CliError::config(format!("plan: {e}")))?;
    let jobs = ov.jobs.or(cfg.jobs).unwrap_or_else(default_jobs);
    if jobs == 0 {
        return Err(CliError::config("jobs must be >= 1"));
    }
    let out_dir = ov
        .out_dir
        .clone()
        .or(cfg.out_dir)
        .ok_or_else(|| CliError::config("no output directory: set out_dir or pass --out-dir"))?;
    let task = cfg.task.resolve()?;
    if task.n_objectives() != plan.n_objectives {
        return Err(CliError::config(format!(
            "plan.n_objectives is {}, the task has {} objectives",
            plan.n_objectives,
            task.n_objectives()
        )));
    }
    let manifest = out_dir.join("manifest.json");
    if manifest.exists() {
        let old = SweepManifest::load(&manifest).map_err(|e| CliError::input(&manifest, e))?;
        if old.plan != plan {
            return Err(CliError::config(format!(
                "{} was written for a different plan; use a fresh --out-dir",
                manifest.display()
            )));
        }
    }

    let (outcome, problem) = match task {
        Resolved::Analytic { problem, solver, start } => {
            if start.is_some() {
                return Err(CliError::config("task.analytic.start is not used by sweeps; seeds pick the start points"));
            }
            create_dir(&out_dir)?;
            let outcome = sweep(&plan, jobs, Some(&manifest), |job| {
                analytic_job(problem.as_ref(), &plan, &solver, job, Some(&out_dir))
            })
            .map_err(CliError::from_core)?;
            (outcome, Some(problem))
        }
        Resolved::Model { spec, data, train } => {
            let splits = make_dataset(&data).map_err(CliError::from_core)?;
            create_dir(&out_dir)?;
            let outcome = sweep(&plan, jobs, Some(&manifest), |job| {
                model_job(&spec, &splits, &train, &plan, job, Some(&out_dir))
            })
            .map_err(CliError::from_core)?;
            (outcome, None)
        }
    };
    let failed = outcome.manifest.failures().count();
    for r in outcome.manifest.failures() {
        eprintln!("run {} failed: {}", r.index, r.error.as_deref().unwrap_or("unknown error"));
    }
    let archive_path = out_dir.join("archive.json");
    outcome.archive.save(&archive_path).map_err(|e| CliError::output(&archive_path, e))?;
    if outcome.archive.is_empty() {
        return Err(CliError {
            code: crate::error::EXIT_NUMERIC,
            message: format!("all {failed} runs failed; no report written"),
        });
    }
    write_report(&outcome.archive, problem.as_deref(), Some(&out_dir))?;
    println!(
        "{} runs, {} failed, {} archive entries",
        outcome.manifest.runs.len(),
        failed,
        outcome.archive.len()
    );
    Ok(())
}

pub fn filter_cmd(input: &Path, ov: &Overrides) -> CliResult<()> {
    check_epsilon(ov.epsilon)?;
    let file = File::open(input).map_err(|e| CliError::input(input, e))?;
    let points = read_points_csv(file).map_err(|e| CliError::input(input, e))?;
    if points.is_empty() {
        return Err(CliError::input(input, "no points"));
    }
    let raw: Vec<&[f64]> = points.iter().map(|p| p.values()).collect();
    let mut kept = eps_nondominance_filter(&raw, ov.epsilon.unwrap_or(0.0)).map_err(CliError::from_core)?;
    kept.sort_unstable();
    let out: Vec<&[f64]> = kept.iter().map(|&i| raw[i]).collect();
    match &ov.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("filtered.csv"), |w| write_points_csv(w, &out))
        }
        None => {
            let stdout = std::io::stdout();
            write_points_csv(stdout.lock(), &out).map_err(|e| CliError::io(e.to_string()))
        }
    }
}

pub fn metrics_cmd(checkpoint: &Path, ov: &Overrides) -> CliResult<()> {
    let (header, values) = read_checkpoint(checkpoint).map_err(|e| CliError::input(checkpoint, e))?;
    let record = match header.kind {
        CheckpointKind::Analytic => vector_metrics(&values),
        CheckpointKind::Model => {
            let model = model_from_checkpoint(&header, &values).map_err(|e| CliError::input(checkpoint, e))?;
            compute_metrics(&model, &header.clusters)
        }
    };
    let value = Value::Object(metrics_value(&record));
    match &ov.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join("metrics.json"), &value)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            Ok(())
        }
    }
}

pub fn report_cmd(archive: &Path, problem: Option<&str>, ov: &Overrides) -> CliResult<()> {
    let problem = problem.map(problem_by_name).transpose().map_err(CliError::from_core)?;
    let a = ParetoArchive::load(archive).map_err(|e| CliError::input(archive, e))?;
    if a.is_empty() {
        return Err(CliError::input(archive, "archive is empty"));
    }
    if let Some(p) = &problem {
        if a.entries().any(|e| e.objectives.len() != p.n_objectives()) {
            return Err(CliError::config(format!(
                "archive entries do not have the {} objectives of {}",
                p.n_objectives(),
                p.name()
            )));
        }
    }
    write_report(&a, problem.as_deref(), ov.out_dir.as_deref())
}

fn write_report(
    archive: &ParetoArchive,
    problem: Option<&dyn pareto_forge::bench::AnalyticProblem>,
    out_dir: Option<&Path>,
) -> CliResult<()> {
    let report = front_report(archive, problem, SR_BIN_WIDTH).map_err(CliError::from_core)?;
    match out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("front.csv"), |w| report.write_csv(w))?;
            let md = dir.join("report.md");
            std::fs::write(&md, report.to_markdown()).map_err(|e| CliError::output(&md, e))
        }
        None => {
            print!("{}", report.to_markdown());
            Ok(())
        }
    }
}
