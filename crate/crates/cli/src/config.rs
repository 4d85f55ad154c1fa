//! Run configuration.
//!
//! Files are flat `block.key = value` lines; `#` starts a comment. Every key
//! has a default, so an empty file is a valid config. The same keys are
//! accepted by `--set`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pcd_core::benchmarks::{SamplingStrategy, Task};
use pcd_core::conditioning::{ConditioningParams, ConditioningStrategy};
use pcd_core::diffusion::{DenoiserConfig, TrainingConfig};
use pcd_core::refdirs::DirectionMethod;
use pcd_core::reweighting::WeightingMode;
use pcd_core::sampler::{SamplerConfig, SamplerMode};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub name: String,
    pub d: Option<usize>,
    pub m: Option<usize>,
    /// Dataset size.
    pub n: usize,
    pub strategy: String,
    pub seed: u64,
    /// Load this PCDD file instead of generating a dataset.
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReweightBlock {
    pub mode: String,
    pub bins: usize,
    pub k: f64,
    pub tau: f64,
    pub prune_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CondBlock {
    pub strategy: String,
    pub refdir_method: String,
    pub l: usize,
    pub j: usize,
    pub q: usize,
    pub distance: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub width: usize,
    pub depth: usize,
    pub rff_dim: usize,
    pub cond_dim: usize,
    pub cfg_dropout: f64,
    pub sigma_data: f64,
    pub p_mean: f64,
    pub p_std: f64,
    pub zero_init_output: bool,
    /// `f32` or `f64`.
    pub precision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub ema_warmup: bool,
    pub early_stop: bool,
    pub holdout: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub s_churn: f64,
    pub s_tmin: f64,
    pub s_tmax: f64,
    pub s_noise: f64,
    pub gamma: f64,
    pub mode: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    pub seeds: usize,
    pub ref_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskBlock,
    pub reweight: ReweightBlock,
    pub cond: CondBlock,
    pub model: ModelBlock,
    pub train: TrainBlock,
    pub sampler: SamplerBlock,
    pub eval: EvalBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dm = DenoiserConfig::default();
        let tr = TrainingConfig::default();
        let sm = SamplerConfig::default();
        let cp = ConditioningParams::default();
        Self {
            task: TaskBlock {
                name: "zdt1".into(),
                d: None,
                m: None,
                n: 10_000,
                strategy: "ea-collected".into(),
                seed: 0,
                dataset: None,
            },
            reweight: ReweightBlock {
                mode: "reweight".into(),
                bins: 30,
                k: 10.0,
                tau: 0.05,
                prune_fraction: 0.5,
            },
            cond: CondBlock {
                strategy: "refdir".into(),
                refdir_method: "riesz".into(),
                l: 32,
                j: cp.j,
                q: cp.q,
                distance: cp.distance,
                noise: cp.noise_sigma,
            },
            model: ModelBlock {
                width: dm.width,
                depth: dm.depth,
                rff_dim: dm.rff_dim,
                cond_dim: dm.cond_dim,
                cfg_dropout: dm.cfg_dropout_prob,
                sigma_data: dm.sigma_data,
                p_mean: dm.p_mean,
                p_std: dm.p_std,
                zero_init_output: dm.zero_init_output,
                precision: "f32".into(),
            },
            train: TrainBlock {
                batch_size: tr.batch_size,
                steps: tr.max_steps,
                lr: tr.learning_rate,
                weight_decay: tr.weight_decay,
                ema_decay: tr.ema_decay,
                ema_warmup: tr.ema_warmup,
                early_stop: tr.early_stop,
                holdout: tr.holdout_fraction,
                eval_every: tr.eval_every,
                patience: tr.patience,
                seed: 0,
            },
            sampler: SamplerBlock {
                steps: sm.steps,
                sigma_min: sm.sigma_min,
                sigma_max: sm.sigma_max,
                rho: sm.rho,
                s_churn: sm.s_churn,
                s_tmin: sm.s_tmin,
                s_tmax: sm.s_tmax,
                s_noise: sm.s_noise,
                gamma: sm.guidance_scale,
                mode: sm.mode.to_string(),
                seed: 0,
            },
            eval: EvalBlock {
                seeds: 1,
                ref_multiplier: pcd_core::indicators::DEFAULT_REF_MULTIPLIER,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line)
                .map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (block, field) = key
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("key `{key}` has no block prefix")))?;
        let mut tree = serde_json::to_value(&*self).map_err(cfg_err)?;
        let slot = tree
            .get_mut(block)
            .and_then(|b| b.get_mut(field))
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
        *slot = parse_like(slot, value);
        *self = serde_json::from_value(tree).map_err(|e| CliError::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// Flat `block.key → value` view, sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let tree = serde_json::to_value(self).expect("config serializes");
        let mut out = BTreeMap::new();
        if let Value::Object(blocks) = tree {
            for (b, fields) in blocks {
                if let Value::Object(fields) = fields {
                    for (f, v) in fields {
                        let s = match v {
                            Value::Null => "auto".to_string(),
                            Value::String(s) => s,
                            other => other.to_string(),
                        };
                        out.insert(format!("{b}.{f}"), s);
                    }
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Checks every field that is stored as text or has a restricted range.
    pub fn validate(&self) -> Result<()> {
        self.task_spec()?;
        self.sampling_strategy()?;
        self.weighting_mode()?;
        self.cond_strategy()?;
        self.direction_method()?;
        self.precision()?;
        self.denoiser_config(0).validate().map_err(cfg_err)?;
        self.training_config(0).validate().map_err(cfg_err)?;
        self.sampler_config(0)?.validate().map_err(cfg_err)?;
        if self.eval.seeds < 1 {
            return Err(CliError::Config("eval.seeds must be >= 1".into()));
        }
        if !(self.eval.ref_multiplier > 1.0) {
            return Err(CliError::Config("eval.ref_multiplier must be > 1".into()));
        }
        if self.reweight.bins < 1 || !(self.reweight.k > 0.0) || !(self.reweight.tau > 0.0) {
            return Err(CliError::Config("reweight.bins >= 1, reweight.k > 0, reweight.tau > 0 required".into()));
        }
        let c = &self.cond;
        if c.l < 1 || c.j < 1 || c.q < c.j {
            return Err(CliError::Config(format!(
                "need cond.l >= 1 and cond.q >= cond.j >= 1, got l = {}, j = {}, q = {}",
                c.l, c.j, c.q
            )));
        }
        if !(0.0..1.0).contains(&c.distance) || c.noise < 0.0 {
            return Err(CliError::Config("cond.distance must lie in [0, 1) and cond.noise >= 0".into()));
        }
        if self.task.dataset.is_none() && self.task.n < 2 {
            return Err(CliError::Config("task.n must be >= 2".into()));
        }
        if let Some(p) = &self.task.dataset {
            if !Path::new(p).exists() {
                return Err(CliError::Config(format!("task.dataset `{p}` does not exist")));
            }
        }
        Ok(())
    }

    pub fn task_spec(&self) -> Result<Task> {
        Task::by_name(&self.task.name, self.task.d, self.task.m).map_err(cfg_err)
    }

    pub fn sampling_strategy(&self) -> Result<SamplingStrategy> {
        self.task.strategy.parse().map_err(cfg_err)
    }

    pub fn weighting_mode(&self) -> Result<WeightingMode> {
        self.reweight.mode.parse().map_err(cfg_err)
    }

    pub fn cond_strategy(&self) -> Result<ConditioningStrategy> {
        self.cond.strategy.parse().map_err(cfg_err)
    }

    pub fn direction_method(&self) -> Result<DirectionMethod> {
        self.cond.refdir_method.parse().map_err(cfg_err)
    }

    pub fn precision(&self) -> Result<Precision> {
        match self.model.precision.as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(CliError::Config(format!("model.precision must be f32 or f64, got `{other}`"))),
        }
    }

    pub fn dataset_path(&self) -> Option<PathBuf> {
        self.task.dataset.as_ref().map(PathBuf::from)
    }

    pub fn denoiser_config(&self, seed_index: usize) -> DenoiserConfig {
        let m = &self.model;
        DenoiserConfig {
            width: m.width,
            depth: m.depth,
            rff_dim: m.rff_dim,
            cond_dim: m.cond_dim,
            cfg_dropout_prob: m.cfg_dropout,
            sigma_data: m.sigma_data,
            p_mean: m.p_mean,
            p_std: m.p_std,
            zero_init_output: m.zero_init_output,
            seed: self.train.seed + seed_index as u64,
        }
    }

    pub fn training_config(&self, seed_index: usize) -> TrainingConfig {
        let t = &self.train;
        TrainingConfig {
            batch_size: t.batch_size,
            max_steps: t.steps,
            learning_rate: t.lr,
            weight_decay: t.weight_decay,
            ema_decay: t.ema_decay,
            ema_warmup: t.ema_warmup,
            early_stop: t.early_stop,
            holdout_fraction: t.holdout,
            eval_every: t.eval_every,
            patience: t.patience,
            seed: t.seed + seed_index as u64,
            ..TrainingConfig::default()
        }
    }

    pub fn sampler_config(&self, seed_index: usize) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let mode: SamplerMode = s.mode.parse().map_err(cfg_err)?;
        Ok(SamplerConfig {
            steps: s.steps,
            sigma_min: s.sigma_min,
            sigma_max: s.sigma_max,
            rho: s.rho,
            s_churn: s.s_churn,
            s_tmin: s.s_tmin,
            s_tmax: s.s_tmax,
            s_noise: s.s_noise,
            guidance_scale: s.gamma,
            mode,
            seed: s.seed + seed_index as u64,
        })
    }

    pub fn conditioning_params(&self, seed_index: usize) -> ConditioningParams {
        ConditioningParams {
            j: self.cond.j,
            q: self.cond.q,
            distance: self.cond.distance,
            noise_sigma: self.cond.noise,
            seed: self.sampler.seed + seed_index as u64,
        }
    }
}

/// Parses `value` as the same JSON type as `current`. `auto` clears an
/// optional field.
fn parse_like(current: &Value, value: &str) -> Value {
    if value == "auto" || value == "none" && current.is_null() {
        return Value::Null;
    }
    let number = || {
        value
            .parse::<u64>()
            .map(Value::from)
            .or_else(|_| value.parse::<i64>().map(Value::from))
            .or_else(|_| value.parse::<f64>().map(Value::from))
            .ok()
    };
    match current {
        Value::Bool(_) => value.parse::<bool>().map(Value::Bool).unwrap_or_else(|_| Value::String(value.into())),
        Value::Number(_) => number().unwrap_or_else(|| Value::String(value.into())),
        Value::String(_) => Value::String(value.into()),
        _ => number().unwrap_or_else(|| Value::String(value.into())),
    }
}
