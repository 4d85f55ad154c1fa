use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Batch, DenoiserConfig, DenoiserModel, LossDraws};
use crate::dataset::OfflineDataset;
use crate::error::{PcdError, Result};
use crate::pareto::NormalizationStats;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    /// Ramp the EMA decay as `min(decay, (1 + t)/(10 + t))`.
    pub ema_warmup: bool,
    pub early_stop: bool,
    pub holdout_fraction: f64,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Fixed noise draws per held-out sample.
    pub holdout_draws: usize,
    pub seed: u64,
    /// Where to write a checkpoint if training diverges.
    pub dump_on_divergence: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            max_steps: 12_000,
            learning_rate: 3e-4,
            weight_decay: 1e-4,
            ema_decay: 0.999,
            ema_warmup: true,
            early_stop: true,
            holdout_fraction: 0.1,
            eval_every: 100,
            patience: 10,
            holdout_draws: 2,
            seed: 0,
            dump_on_divergence: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.max_steps < 1 || self.eval_every < 1 || self.holdout_draws < 1 {
            return Err(PcdError::InvalidArgument(
                "batch_size, max_steps, eval_every and holdout_draws must be >= 1".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5) {
            return Err(PcdError::InvalidArgument(format!(
                "holdout fraction must lie in (0, 0.5], got {}",
                self.holdout_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(PcdError::InvalidArgument(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(PcdError::InvalidArgument("learning rate must be positive, weight decay >= 0".into()));
        }
        Ok(())
    }
}

/// Cosine-annealed rate, `lr0` at step 0 and zero at `max_steps`.
pub fn cosine_lr(lr0: f64, step: usize, max_steps: usize) -> f64 {
    let t = (step.min(max_steps)) as f64 / max_steps as f64;
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// `shadow ← decay·shadow + (1 − decay)·param`.
pub fn ema_update<T: Scalar>(shadow: &mut [T], params: &[T], decay: f64) {
    let a = T::lit(decay);
    let b = T::one() - a;
    for (s, &p) in shadow.iter_mut().zip(params) {
        *s = a * *s + b * p;
    }
}

/// AdamW with decoupled weight decay applied only to selected ranges.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    decay_mask: Vec<bool>,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n: usize, weight_decay: f64, decayed: &[std::ops::Range<usize>]) -> Self {
        let mut decay_mask = vec![false; n];
        for r in decayed {
            decay_mask[r.clone()].iter_mut().for_each(|d| *d = true);
        }
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            decay_mask,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.t));
        let c2 = T::lit(1.0 - self.beta2.powi(self.t));
        let (lr, eps, wd) = (T::lit(lr), T::lit(self.eps), T::lit(self.weight_decay));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let mut upd = m_hat / (v_hat.sqrt() + eps);
            if self.decay_mask[i] {
                upd += wd * params[i];
            }
            params[i] -= lr * upd;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
    pub lr: f64,
}

pub fn write_metrics_csv(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "train_loss", "holdout_loss", "lr"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{}", r.train_loss),
            r.holdout_loss.map(|h| format!("{h}")).unwrap_or_default(),
            format!("{}", r.lr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// EMA parameters hold the snapshot to sample with.
    pub model: DenoiserModel<T>,
    pub metrics: Vec<MetricRow>,
    pub steps_run: usize,
    pub best_step: Option<usize>,
    pub best_holdout: Option<f64>,
    pub stopped_early: bool,
}

/// Dataset rows in model space: `x` mapped to `[-1, 1]` and `y` z-scored.
pub fn standardize<T: Scalar>(dataset: &OfflineDataset, stats: &NormalizationStats<T>) -> (Array2<T>, Array2<T>) {
    let n = dataset.n();
    let mut x = Array2::zeros((n, dataset.d()));
    let mut y = Array2::zeros((n, dataset.m()));
    for i in 0..n {
        let xi: Vec<T> = dataset.x.row(i).iter().map(|&v| T::lit(v)).collect();
        let yi: Vec<T> = dataset.y.row(i).iter().map(|&v| T::lit(v)).collect();
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&stats.encode_x(&xi)));
        y.row_mut(i).assign(&ndarray::ArrayView1::from(&stats.to_z(&yi)));
    }
    (x, y)
}

struct Holdout<T> {
    batches: Vec<(Batch<T>, LossDraws<T>)>,
    total_rows: usize,
}

const EVAL_CHUNK: usize = 512;

impl<T: Scalar> Holdout<T> {
    fn new(model: &DenoiserModel<T>, x: &Array2<T>, y: &Array2<T>, w: &[T], idx: &[usize], draws: usize, seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive_seed(seed, 0x401d));
        let rows: Vec<usize> = (0..draws).flat_map(|_| idx.iter().cloned()).collect();
        let batches = rows
            .chunks(EVAL_CHUNK)
            .map(|chunk| {
                let b = Batch {
                    x: x.select(Axis(0), chunk),
                    y: y.select(Axis(0), chunk),
                    w: chunk.iter().map(|&i| w[i]).collect(),
                };
                let mut dr = model.draw(chunk.len(), &mut r);
                dr.drop.iter_mut().for_each(|d| *d = false);
                (b, dr)
            })
            .collect();
        Self {
            batches,
            total_rows: rows.len(),
        }
    }

    fn loss(&self, model: &DenoiserModel<T>, p: &[T]) -> Result<f64> {
        let mut total = 0.0;
        for (b, dr) in &self.batches {
            total += model.loss(p, b, dr)?.f64() * b.x.nrows() as f64;
        }
        Ok(total / self.total_rows as f64)
    }
}

/// Trains a denoiser on the reweighted objective.
///
/// `weights` has one entry per dataset row. A random `holdout_fraction` of the
/// rows is set aside; the weighted loss on it, under the EMA parameters and
/// fixed noise draws, drives early stopping. The returned model's EMA
/// parameters are the best snapshot seen.
pub fn train<T: Scalar>(
    dataset: &OfflineDataset,
    stats: &NormalizationStats<f64>,
    weights: &[f64],
    model_cfg: &DenoiserConfig,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let n = dataset.n();
    if weights.len() != n {
        return Err(PcdError::LengthMismatch { expected: n, got: weights.len() });
    }
    if n < 2 {
        return Err(PcdError::InvalidArgument("training needs at least 2 samples".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(PcdError::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let stats_t: NormalizationStats<T> = stats.cast();
    let mut model = DenoiserModel::<T>::new(model_cfg.clone(), stats_t)?;
    let (x, y) = standardize(dataset, &model.stats);
    let w: Vec<T> = weights.iter().map(|&v| T::lit(v)).collect();

    let mut r = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let n_hold = ((cfg.holdout_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let holdout = Holdout::new(&model, &x, &y, &w, hold_idx, cfg.holdout_draws, cfg.seed);

    let mut opt = AdamW::<T>::new(model.n_params(), cfg.weight_decay, &model.layout.decayed_ranges());
    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, Vec<T>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut steps_run = 0;
    let bs = cfg.batch_size;

    for step in 0..cfg.max_steps {
        let picks: Vec<usize> = (0..bs).map(|_| train_idx[r.random_range(0..train_idx.len())]).collect();
        let batch = Batch {
            x: x.select(Axis(0), &picks),
            y: y.select(Axis(0), &picks),
            w: picks.iter().map(|&i| w[i]).collect(),
        };
        let draws = model.draw(bs, &mut r);
        let lr = cosine_lr(cfg.learning_rate, step, cfg.max_steps);
        let (loss, grad) = match model.loss_and_grad(&model.params, &batch, &draws) {
            Ok(v) => v,
            Err(e) => return Err(diverged(&model, cfg, step, lr, e.to_string())),
        };
        opt.step(&mut model.params, &grad, lr);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(diverged(&model, cfg, step, lr, "non-finite parameter after update".into()));
        }
        let decay = if cfg.ema_warmup {
            cfg.ema_decay.min((1.0 + step as f64) / (10.0 + step as f64))
        } else {
            cfg.ema_decay
        };
        ema_update(&mut model.ema, &model.params, decay);
        steps_run = step + 1;

        let eval_now = steps_run % cfg.eval_every == 0 || steps_run == cfg.max_steps;
        let holdout_loss = if eval_now {
            Some(holdout.loss(&model, &model.ema)?)
        } else {
            None
        };
        metrics.push(MetricRow {
            step: steps_run,
            train_loss: loss.f64(),
            holdout_loss,
            lr,
        });

        if let Some(h) = holdout_loss {
            if best.as_ref().is_none_or(|b| h < b.0) {
                best = Some((h, steps_run, model.ema.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.early_stop && since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let (best_holdout, best_step) = match best {
        Some((h, s, snapshot)) => {
            if cfg.early_stop {
                model.ema = snapshot;
            }
            (Some(h), Some(s))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        model,
        metrics,
        steps_run,
        best_step,
        best_holdout,
        stopped_early,
    })
}

fn diverged<T: Scalar>(model: &DenoiserModel<T>, cfg: &TrainingConfig, step: usize, lr: f64, detail: String) -> PcdError {
    let norm = model.params.iter().map(|p| p.f64() * p.f64()).sum::<f64>().sqrt();
    let mut detail = format!("{detail}; lr = {lr:e}, parameter norm = {norm:e}");
    if let Some(path) = &cfg.dump_on_divergence {
        match super::save_checkpoint(model, path) {
            Ok(()) => detail.push_str(&format!("; state written to {}", path.display())),
            Err(e) => detail.push_str(&format!("; state dump failed: {e}")),
        }
    }
    PcdError::Diverged { step, detail }
}
