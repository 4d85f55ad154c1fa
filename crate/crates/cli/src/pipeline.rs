//! End-to-end runs: reweight, train, condition, sample, evaluate.

use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use pcd_core::benchmarks::{generate_offline_dataset, Task};
use pcd_core::conditioning::{generate_with_strategy, ConditioningSet};
use pcd_core::dataset::OfflineDataset;
use pcd_core::diffusion::{self, train, write_metrics_csv, DenoiserModel, MetricRow};
use pcd_core::indicators::{evaluate_run, hypervolume_exact, normalize_objectives, HvReport};
use pcd_core::pareto::{compute_normalization, dominance_numbers, non_dominated_sort, NormalizationStats};
use pcd_core::refdirs::{self, ReferenceDirections};
use pcd_core::reweighting::{
    build_grid, coefficient_of_variation, compute_weights, prune_weights, WeightingMode,
};
use pcd_core::sampler::sample_batch;
use pcd_core::Scalar;

use crate::config::{Precision, RunConfig};
use crate::error::{CliError, PhaseExt, Result};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Wraps a task so every objective evaluation is counted.
pub struct CountingOracle<'a> {
    task: &'a Task,
    calls: Cell<usize>,
}

impl<'a> CountingOracle<'a> {
    pub fn new(task: &'a Task) -> Self {
        Self { task, calls: Cell::new(0) }
    }

    pub fn evaluate(&self, x: &[f64]) -> pcd_core::Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.task.evaluate(x)
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed_index: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub hv: HvReport,
    /// Hypervolume of the dataset's non-dominated points, same convention.
    pub dbest_hv_100: f64,
    pub relative_improvement: f64,
    pub oracle_calls: usize,
    pub train_steps: usize,
    pub stopped_early: bool,
    pub best_holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub hv_100: MeanStd,
    pub hv_75: MeanStd,
    pub hv_50: MeanStd,
    pub relative_improvement: MeanStd,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedResult]) -> Self {
        let col = |f: fn(&SeedResult) -> f64| MeanStd::of(&seeds.iter().map(f).collect::<Vec<_>>());
        Self {
            hv_100: col(|s| s.hv.hv_100),
            hv_75: col(|s| s.hv.hv_75),
            hv_50: col(|s| s.hv.hv_50),
            relative_improvement: col(|s| s.relative_improvement),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub dataset_s: f64,
    pub weights_s: f64,
    /// Per seed.
    pub train_s: Vec<f64>,
    pub sample_s: Vec<f64>,
    pub eval_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub config: std::collections::BTreeMap<String, String>,
    pub task: String,
    pub d: usize,
    pub m: usize,
    pub dataset_size: usize,
    pub weight_cv: f64,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Aggregate,
    pub timings: PhaseTimings,
}

impl RunResult {
    /// JSON without the timing block, for comparing runs.
    pub fn payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("result serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        v
    }
}

/// Loads the configured dataset file or generates one.
pub fn obtain_dataset(cfg: &RunConfig, task: &Task) -> Result<OfflineDataset> {
    match cfg.dataset_path() {
        Some(p) => {
            let ds = OfflineDataset::load(&p).phase("dataset")?;
            if ds.d() != task.d || ds.m() != task.m {
                return Err(CliError::Config(format!(
                    "dataset {} has d = {}, m = {}, task {} needs d = {}, m = {}",
                    p.display(),
                    ds.d(),
                    ds.m(),
                    task.name(),
                    task.d,
                    task.m
                )));
            }
            Ok(ds)
        }
        None => generate_offline_dataset(task, cfg.task.n, cfg.task.seed, cfg.sampling_strategy()?).phase("dataset"),
    }
}

/// Per-sample training weights for the configured mode, and their
/// coefficient of variation.
pub fn training_weights(cfg: &RunConfig, ds: &OfflineDataset) -> Result<(Vec<f64>, f64)> {
    let w = match cfg.weighting_mode()? {
        WeightingMode::None => vec![1.0; ds.n()],
        WeightingMode::Prune => {
            let fronts = non_dominated_sort(ds.y.view()).phase("weights")?;
            prune_weights(&fronts, cfg.reweight.prune_fraction).phase("weights")?
        }
        WeightingMode::Reweight => {
            let dom = dominance_numbers(ds.y.view()).phase("weights")?;
            let grid = build_grid(ds.y.view(), cfg.reweight.bins).phase("weights")?;
            compute_weights(ds.y.view(), &grid, &dom, cfg.reweight.k, cfg.reweight.tau)
                .phase("weights")?
                .w
        }
    };
    let cv = coefficient_of_variation(&w);
    Ok((w, cv))
}

/// Hypervolume of the dataset's first front under the evaluation convention.
pub fn dbest_hv(ds: &OfflineDataset, stats: &NormalizationStats<f64>, ref_multiplier: f64) -> Result<f64> {
    let fronts = non_dominated_sort(ds.y.view()).phase("eval")?;
    let best = ds.y.select(Axis(0), fronts.first());
    let norm = normalize_objectives(best.view(), stats);
    let r = vec![ref_multiplier; stats.m()];
    hypervolume_exact(norm.view(), &r).phase("eval")
}

pub fn directions<T: Scalar>(cfg: &RunConfig, m: usize, seed: u64) -> Result<ReferenceDirections<T>> {
    refdirs::generate(cfg.direction_method()?, m, cfg.cond.l, seed).phase("conditioning")
}

pub fn conditioning<T: Scalar>(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    stats: &NormalizationStats<f64>,
    seed_index: usize,
) -> Result<ConditioningSet<T>> {
    let stats_t: NormalizationStats<T> = stats.cast();
    let y: Array2<T> = ds.y.mapv(T::lit);
    let params = cfg.conditioning_params(seed_index);
    let w = directions::<T>(cfg, ds.m(), params.seed)?;
    generate_with_strategy(cfg.cond_strategy()?, y.view(), &stats_t, &w, &params).phase("conditioning")
}

pub fn sample<T: Scalar>(
    cfg: &RunConfig,
    model: &DenoiserModel<T>,
    cond: &ConditioningSet<T>,
    seed_index: usize,
) -> Result<Array2<f64>> {
    let sc = cfg.sampler_config(seed_index)?;
    let x = sample_batch(model, &model.stats, cond.targets.view(), &sc).phase("sampling")?;
    Ok(x.mapv(|v| v.f64()))
}

/// Evaluates every row once with the counting oracle.
pub fn evaluate_candidates(oracle: &CountingOracle, x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((x.nrows(), oracle.task.m));
    for (i, row) in x.rows().into_iter().enumerate() {
        let f = oracle.evaluate(&row.to_vec()).phase("eval")?;
        y.row_mut(i).iter_mut().zip(f).for_each(|(a, b)| *a = b);
    }
    Ok(y)
}

pub fn train_model<T: Scalar>(
    cfg: &RunConfig,
    ds: &OfflineDataset,
    stats: &NormalizationStats<f64>,
    weights: &[f64],
    seed_index: usize,
    dump: Option<PathBuf>,
) -> Result<diffusion::TrainOutcome<T>> {
    let mut tc = cfg.training_config(seed_index);
    tc.dump_on_divergence = dump;
    train::<T>(ds, stats, weights, &cfg.denoiser_config(seed_index), &tc).phase("training")
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

struct SeedOutput {
    result: SeedResult,
    metrics: Vec<MetricRow>,
    train_s: f64,
    sample_s: f64,
    eval_s: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_seed<T: Scalar>(
    cfg: &RunConfig,
    task: &Task,
    ds: &OfflineDataset,
    stats: &NormalizationStats<f64>,
    weights: &[f64],
    dbest: f64,
    s: usize,
    out: Option<&Path>,
) -> Result<SeedOutput> {
    let t0 = Instant::now();
    let dump = out.map(|o| o.join(format!("diverged_seed{s}.ckpt")));
    let outcome = train_model::<T>(cfg, ds, stats, weights, s, dump)?;
    let train_s = t0.elapsed().as_secs_f64();
    if let Some(o) = out {
        diffusion::save_checkpoint(&outcome.model, o.join(format!("model_seed{s}.ckpt"))).phase("training")?;
    }

    let t1 = Instant::now();
    let cond = conditioning::<T>(cfg, ds, stats, s)?;
    if let Some(o) = out {
        cond.to_csv(o.join(format!("conditioning_seed{s}.csv"))).phase("conditioning")?;
    }
    let x = sample(cfg, &outcome.model, &cond, s)?;
    let sample_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let oracle = CountingOracle::new(task);
    let y = evaluate_candidates(&oracle, &x)?;
    if oracle.calls() != cfg.cond.q {
        return Err(CliError::Runtime(format!(
            "oracle budget violated: {} calls for Q = {}",
            oracle.calls(),
            cfg.cond.q
        )));
    }
    let hv = evaluate_run(y.view(), stats, cfg.eval.ref_multiplier).phase("eval")?;
    let eval_s = t2.elapsed().as_secs_f64();

    let relative_improvement = if dbest > 0.0 { hv.hv_100 / dbest } else { f64::NAN };
    Ok(SeedOutput {
        result: SeedResult {
            seed_index: s,
            x: rows(&x),
            y: rows(&y),
            hv,
            dbest_hv_100: dbest,
            relative_improvement,
            oracle_calls: oracle.calls(),
            train_steps: outcome.steps_run,
            stopped_early: outcome.stopped_early,
            best_holdout_loss: outcome.best_holdout,
        },
        metrics: outcome.metrics,
        train_s,
        sample_s,
        eval_s,
    })
}

/// Full pipeline over `eval.seeds` seeds. With `out`, artifacts are written as
/// they are produced, so a failing phase leaves the earlier ones behind.
pub fn cmd_run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        fs::write(o.join("config.txt"), cfg.to_text())?;
    }
    let task = cfg.task_spec()?;
    let t0 = Instant::now();
    let ds = obtain_dataset(cfg, &task)?;
    let dataset_s = t0.elapsed().as_secs_f64();
    let stats = compute_normalization(&ds).phase("dataset")?;

    let t1 = Instant::now();
    let (weights, weight_cv) = training_weights(cfg, &ds)?;
    let weights_s = t1.elapsed().as_secs_f64();
    if let Some(o) = out {
        write_column(&o.join("weights.csv"), "weight", &weights)?;
    }
    let dbest = dbest_hv(&ds, &stats, cfg.eval.ref_multiplier)?;

    let mut timings = PhaseTimings { dataset_s, weights_s, ..Default::default() };
    let mut seeds = Vec::with_capacity(cfg.eval.seeds);
    let mut all_metrics = Vec::new();
    for s in 0..cfg.eval.seeds {
        let so = match cfg.precision()? {
            Precision::F32 => run_seed::<f32>(cfg, &task, &ds, &stats, &weights, dbest, s, out)?,
            Precision::F64 => run_seed::<f64>(cfg, &task, &ds, &stats, &weights, dbest, s, out)?,
        };
        timings.train_s.push(so.train_s);
        timings.sample_s.push(so.sample_s);
        timings.eval_s.push(so.eval_s);
        all_metrics.push(so.metrics);
        seeds.push(so.result);
    }

    let result = RunResult {
        schema_version: RESULT_SCHEMA_VERSION,
        config: cfg.entries(),
        task: task.name().to_string(),
        d: task.d,
        m: task.m,
        dataset_size: ds.n(),
        weight_cv,
        aggregate: Aggregate::from_seeds(&seeds),
        seeds,
        timings,
    };
    if let Some(o) = out {
        write_result(&result, o)?;
        write_seed_metrics(&all_metrics, &o.join("metrics.csv"))?;
    }
    Ok(result)
}

pub fn write_result(result: &RunResult, out: &Path) -> Result<()> {
    fs::write(out.join("result.json"), serde_json::to_string_pretty(result)?)?;
    let mut text = String::new();
    let (d, m) = (result.d, result.m);
    let header: Vec<String> = std::iter::once("seed".to_string())
        .chain((0..d).map(|j| format!("x{j}")))
        .chain((0..m).map(|j| format!("y{j}")))
        .collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for s in &result.seeds {
        for (x, y) in s.x.iter().zip(&s.y) {
            let cells: Vec<String> = std::iter::once(s.seed_index.to_string())
                .chain(x.iter().chain(y).map(|v| format!("{v}")))
                .collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
    }
    fs::write(out.join("front.csv"), text)?;
    Ok(())
}

fn write_seed_metrics(per_seed: &[Vec<MetricRow>], path: &Path) -> Result<()> {
    let mut text = String::from("seed,step,train_loss,holdout_loss,lr\n");
    for (s, rows) in per_seed.iter().enumerate() {
        for r in rows {
            text.push_str(&format!(
                "{s},{},{},{},{}\n",
                r.step,
                r.train_loss,
                r.holdout_loss.map(|h| h.to_string()).unwrap_or_default(),
                r.lr
            ));
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn write_column(path: &Path, name: &str, v: &[f64]) -> Result<()> {
    let mut text = format!("{name}\n");
    for x in v {
        text.push_str(&format!("{x}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Summary of the dataset's normalized dominance numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Ten equal-width bins over `[0, 1]`.
    pub histogram: [usize; 10],
}

pub fn dominance_summary(ds: &OfflineDataset) -> Result<DominanceSummary> {
    let dom = dominance_numbers::<f64>(ds.y.view()).phase("dataset")?;
    let mut v = dom.normalized.clone();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut histogram = [0usize; 10];
    for &o in &v {
        histogram[((o * 10.0) as usize).min(9)] += 1;
    }
    Ok(DominanceSummary {
        min: v[0],
        median: v[v.len() / 2],
        max: v[v.len() - 1],
        histogram,
    })
}

/// Generates (or loads) the dataset and writes `dataset.pcdd` and its CSV
/// mirror.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<(OfflineDataset, DominanceSummary)> {
    cfg.validate()?;
    let task = cfg.task_spec()?;
    let ds = obtain_dataset(cfg, &task)?;
    fs::create_dir_all(out)?;
    ds.save(out.join("dataset.pcdd")).phase("dataset")?;
    ds.write_csv(out.join("dataset.csv")).phase("dataset")?;
    let summary = dominance_summary(&ds)?;
    Ok((ds, summary))
}

/// Trains one model (seed index 0) and writes `model.ckpt`, `metrics.csv`
/// and `weights.csv`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let task = cfg.task_spec()?;
    let ds = obtain_dataset(cfg, &task)?;
    let stats = compute_normalization(&ds).phase("dataset")?;
    let (weights, _) = training_weights(cfg, &ds)?;
    fs::create_dir_all(out)?;
    write_column(&out.join("weights.csv"), "weight", &weights)?;
    let dump = Some(out.join("diverged.ckpt"));
    match cfg.precision()? {
        Precision::F32 => {
            let o = train_model::<f32>(cfg, &ds, &stats, &weights, 0, dump)?;
            diffusion::save_checkpoint(&o.model, out.join("model.ckpt")).phase("training")?;
            write_metrics_csv(&o.metrics, out.join("metrics.csv")).phase("training")?;
        }
        Precision::F64 => {
            let o = train_model::<f64>(cfg, &ds, &stats, &weights, 0, dump)?;
            diffusion::save_checkpoint(&o.model, out.join("model.ckpt")).phase("training")?;
            write_metrics_csv(&o.metrics, out.join("metrics.csv")).phase("training")?;
        }
    }
    Ok(())
}

fn sample_with<T: Scalar>(cfg: &RunConfig, ckpt: &Path, ds: &OfflineDataset, out: &Path) -> Result<Array2<f64>> {
    let model = diffusion::load_checkpoint::<T>(ckpt).phase("sampling")?;
    model.expect_dims(ds.d(), ds.m()).phase("sampling")?;
    let stats = compute_normalization(ds).phase("dataset")?;
    let cond = conditioning::<T>(cfg, ds, &stats, 0)?;
    cond.to_csv(out.join("conditioning.csv")).phase("conditioning")?;
    sample(cfg, &model, &cond, 0)
}

/// Samples `Q` candidates from a checkpoint and writes `samples.csv`.
pub fn cmd_sample(cfg: &RunConfig, ckpt: &Path, out: &Path) -> Result<Array2<f64>> {
    cfg.validate()?;
    let task = cfg.task_spec()?;
    let ds = obtain_dataset(cfg, &task)?;
    fs::create_dir_all(out)?;
    let x = match cfg.precision()? {
        Precision::F32 => sample_with::<f32>(cfg, ckpt, &ds, out)?,
        Precision::F64 => sample_with::<f64>(cfg, ckpt, &ds, out)?,
    };
    write_matrix(&out.join("samples.csv"), "x", &x)?;
    Ok(x)
}

/// Evaluates a `samples.csv` with the true oracle and writes `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, samples: &Path, out: &Path) -> Result<HvReport> {
    cfg.validate()?;
    let task = cfg.task_spec()?;
    let ds = obtain_dataset(cfg, &task)?;
    let stats = compute_normalization(&ds).phase("dataset")?;
    let x = read_matrix(samples, task.d)?;
    let oracle = CountingOracle::new(&task);
    let y = evaluate_candidates(&oracle, &x)?;
    let hv = evaluate_run(y.view(), &stats, cfg.eval.ref_multiplier).phase("eval")?;
    let dbest = dbest_hv(&ds, &stats, cfg.eval.ref_multiplier)?;
    fs::create_dir_all(out)?;
    let report = serde_json::json!({
        "hv": hv,
        "dbest_hv_100": dbest,
        "relative_improvement": hv.hv_100 / dbest,
        "oracle_calls": oracle.calls(),
    });
    fs::write(out.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    write_matrix(&out.join("objectives.csv"), "y", &y)?;
    Ok(hv)
}

pub(crate) fn write_matrix(path: &Path, prefix: &str, a: &Array2<f64>) -> Result<()> {
    let header: Vec<String> = (0..a.ncols()).map(|j| format!("{prefix}{j}")).collect();
    let mut text = header.join(",") + "\n";
    for r in a.rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn read_matrix(path: &Path, cols: usize) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut n = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() != cols {
            return Err(CliError::Runtime(format!(
                "{}:{}: expected {cols} columns, got {}",
                path.display(),
                i + 1,
                vals.len()
            )));
        }
        data.extend(vals);
        n += 1;
    }
    Array2::from_shape_vec((n, cols), data).map_err(|e| CliError::Runtime(e.to_string()))
}
