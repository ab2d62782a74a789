//! Sweeps of (sample × method × strategy × axis value), each producing one
//! results row with insertion and deletion AUCs.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method, TargetLabel};
use super::dataset::{Dataset, Sample};
use super::pnm::heatmap_pgm;
use crate::attribution::{
    attribute_path, integrated_gradients, random_attribution, saliency_map, AttributionMap,
};
use crate::error::{Error, Result};
use crate::evaluation::{deletion_curve, insertion_curve, EvalCurve, ResultRow};
use crate::model::{load_model, DifferentiableModel};
use crate::numerics::{Rng, Tensor};
use crate::strategies::AttackConfig;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "ADVEXPLAIN_THREADS";

/// Rows are abandoned individually; more than this fraction of failures
/// fails the whole run.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub failures: usize,
    pub results_path: Option<PathBuf>,
}

/// One attribution computed for one sample; `strategy` is `-` for methods
/// that do not attack.
#[derive(Debug, Clone)]
struct Job<'a> {
    sample_id: usize,
    sample: &'a Sample,
    sweep_value: &'a str,
    attack: &'a AttackConfig,
}

/// A rayon pool sized by `ADVEXPLAIN_THREADS`, or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Loads the model and dataset named by `cfg`, evaluates every row and
/// writes `results.csv` (plus optional heatmaps and curves) into
/// `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let model = load_model(&cfg.model)?;
    let dataset = Dataset::load(&cfg.dataset)?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let mut out = evaluate(&model, &dataset, cfg, Some(&cfg.output))?;
    let path = cfg.output.join("results.csv");
    write_results(&path, &out.rows)?;
    info!("wrote {} rows to {}", out.rows.len(), path.display());
    out.results_path = Some(path);
    Ok(out)
}

/// Evaluates every row in memory. Artifacts (heatmaps, curves) go under
/// `artifacts` when given and enabled in `cfg`.
pub fn evaluate(
    model: &dyn DifferentiableModel,
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    artifacts: Option<&Path>,
) -> Result<RunOutput> {
    dataset.check_labels(model.num_classes())?;
    if let Some(shape) = dataset.image_shape() {
        let n: usize = shape.iter().product();
        if n != model.input_dim() {
            return Err(Error::invalid(format!(
                "images of shape {shape:?} do not fit a model with input dim {}",
                model.input_dim()
            )));
        }
    }
    if let Some(dir) = artifacts {
        for (on, sub) in [(cfg.heatmaps, "heatmaps"), (cfg.curves, "curves")] {
            if on {
                let d = dir.join(sub);
                std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            }
        }
    }

    let points = cfg.sweep_points()?;
    let count = cfg.limit.map_or(dataset.len(), |l| l.min(dataset.len()));
    let jobs: Vec<Job> = points
        .iter()
        .flat_map(|(value, attack)| {
            dataset.samples[..count]
                .iter()
                .enumerate()
                .map(move |(sample_id, sample)| Job {
                    sample_id,
                    sample,
                    sweep_value: value,
                    attack,
                })
        })
        .collect();

    let pool = worker_pool()?;
    let outcomes: Vec<Vec<Result<ResultRow>>> =
        pool.install(|| jobs.par_iter().map(|job| run_job(model, cfg, job, artifacts)).collect());

    let mut rows = Vec::new();
    let mut failures = 0;
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => {
                warn!("row failed: {e}");
                failures += 1;
            }
        }
    }
    let total = rows.len() + failures;
    if total == 0 {
        return Err(Error::invalid("experiment produced no rows"));
    }
    if failures as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::invalid(format!("{failures} of {total} rows failed")));
    }
    Ok(RunOutput {
        rows,
        failures,
        results_path: None,
    })
}

fn run_job(
    model: &dyn DifferentiableModel,
    cfg: &ExperimentConfig,
    job: &Job,
    artifacts: Option<&Path>,
) -> Vec<Result<ResultRow>> {
    let x = &job.sample.image;
    let target = match cfg.target {
        TargetLabel::Predicted => model.predict(x),
        TargetLabel::Dataset => Ok(job.sample.label),
    };
    let target = match target {
        Ok(t) => t,
        Err(e) => return vec![Err(e)],
    };
    let seed = job.attack.seed;
    let derived = seed ^ job.sample_id as u64;
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let strategies: Vec<Option<_>> = match method {
            Method::Path => cfg.strategies.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        for strategy in strategies {
            let strategy_name = strategy.map_or("-", |s| s.as_str());
            let attributed: Result<(AttributionMap, Option<usize>, usize)> = match (method, strategy) {
                (Method::Path, Some(id)) => {
                    let attack = AttackConfig {
                        seed: derived,
                        ..job.attack.clone()
                    };
                    attribute_path(model, x, target, id, &attack)
                        .map(|(map, trace)| (map, trace.success_step, attack.steps))
                }
                (Method::Ig, _) => {
                    let m = job.attack.ig_steps;
                    integrated_gradients(model, x, target, &Tensor::zeros(x.shape()), m, cfg.ig_objective)
                        .map(|map| (map, None, m))
                }
                (Method::Saliency, _) => saliency_map(model, x, target).map(|map| (map, None, 0)),
                _ => random_attribution(x.shape(), &mut Rng::derive(seed, job.sample_id as u64))
                    .map(|map| (map, None, 0)),
            };
            let row = attributed.and_then(|(map, success_step, steps_t)| {
                let baseline = cfg.baseline.build(x)?;
                let ins = insertion_curve(model, x, &map, cfg.eval_steps, &baseline)?;
                let del = deletion_curve(model, x, &map, cfg.eval_steps, &baseline)?;
                if let Some(dir) = artifacts {
                    let stem = artifact_stem(job, method, strategy_name);
                    if cfg.heatmaps {
                        let path = dir.join("heatmaps").join(format!("{stem}.pgm"));
                        std::fs::write(&path, heatmap_pgm(&map.values)?).map_err(|e| Error::io(&path, e))?;
                    }
                    if cfg.curves {
                        write_curves(&dir.join("curves").join(format!("{stem}.csv")), &ins, &del)?;
                    }
                }
                Ok(ResultRow {
                    sample_id: job.sample_id,
                    method: method.as_str().to_string(),
                    strategy: strategy_name.to_string(),
                    seed,
                    insertion_auc: ins.auc,
                    deletion_auc: del.auc,
                    success_step,
                    steps_t,
                    sweep_axis: cfg.sweep_axis.as_str().to_string(),
                    sweep_value: job.sweep_value.to_string(),
                })
            });
            out.push(row.map_err(|e| {
                Error::invalid(format!(
                    "sample {} ({}) {method}/{strategy_name}: {e}",
                    job.sample_id, job.sample.name
                ))
            }));
        }
    }
    out
}

fn artifact_stem(job: &Job, method: Method, strategy: &str) -> String {
    let mut stem = format!("{}_{method}_{strategy}", job.sample.name);
    if !job.sweep_value.is_empty() {
        stem = format!("{}_{stem}", job.sweep_value);
    }
    stem
}

fn write_curves(path: &Path, ins: &EvalCurve, del: &EvalCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["curve", "fraction", "score"])?;
    for (name, c) in [("insertion", ins), ("deletion", del)] {
        for (f, s) in c.fractions.iter().zip(&c.scores) {
            w.write_record([name.to_string(), f.to_string(), s.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a results file; malformed records report their line number.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<ResultRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: format!("{}: {e}", path.display()),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
