//! One-axis sweeps over `cmd_run`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::pipeline::cmd_run;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Tau,
    Gamma,
    Steps,
    J,
    Noise,
    Distance,
    RefdirMethod,
    SamplerMode,
    Objectives,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::Tau => "reweight.tau",
            Axis::Gamma => "sampler.gamma",
            Axis::Steps => "sampler.steps",
            Axis::J => "cond.j",
            Axis::Noise => "cond.noise",
            Axis::Distance => "cond.distance",
            Axis::RefdirMethod => "cond.refdir_method",
            Axis::SamplerMode => "sampler.mode",
            Axis::Objectives => "task.m",
        }
    }

    pub fn default_grid(self) -> &'static [&'static str] {
        match self {
            Axis::Tau => &["0.01", "0.05", "0.1", "0.5", "1"],
            Axis::Gamma => &["1", "2", "2.5", "5", "8"],
            Axis::Steps => &["64", "128", "256", "1024"],
            Axis::J => &["4", "8", "16", "32", "64"],
            Axis::Noise => &["0", "0.01", "0.05", "0.1", "0.2"],
            Axis::Distance => &["0", "0.05", "0.1", "0.2", "0.3"],
            Axis::RefdirMethod => &["riesz", "das-dennis"],
            Axis::SamplerMode => &["stochastic", "deterministic"],
            Axis::Objectives => &["3", "4", "5", "6"],
        }
    }
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tau" => Axis::Tau,
            "gamma" => Axis::Gamma,
            "steps" => Axis::Steps,
            "J" | "j" => Axis::J,
            "noise" => Axis::Noise,
            "distance" => Axis::Distance,
            "refdir-method" => Axis::RefdirMethod,
            "sampler-mode" => Axis::SamplerMode,
            "objectives" => Axis::Objectives,
            _ => return Err(CliError::Config(format!("unknown ablation axis `{s}`"))),
        })
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Tau => "tau",
            Axis::Gamma => "gamma",
            Axis::Steps => "steps",
            Axis::J => "J",
            Axis::Noise => "noise",
            Axis::Distance => "distance",
            Axis::RefdirMethod => "refdir-method",
            Axis::SamplerMode => "sampler-mode",
            Axis::Objectives => "objectives",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub hv_100_mean: f64,
    pub hv_100_std: f64,
    pub relative_improvement: f64,
    /// `hv_100_mean` over that of the default row.
    pub ratio: f64,
    pub weight_cv: f64,
}

fn same_value(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Runs the pipeline once per grid value. Ratios are normalized to the row
/// whose value equals the base config's; if the grid has no such row (the
/// objectives axis, for one) the first row is the reference.
pub fn cmd_ablate(base: &RunConfig, axis: Axis, values: &[String], out: Option<&Path>) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CliError::Config("ablation grid is empty".into()));
    }
    let default_value = base.entries().get(axis.key()).cloned().unwrap_or_default();
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        cfg.set(axis.key(), v)?;
        let run_dir = out.map(|o| o.join(format!("{axis}_{v}")));
        let r = cmd_run(&cfg, run_dir.as_deref())?;
        rows.push(SweepRow {
            axis: axis.to_string(),
            value: v.clone(),
            hv_100_mean: r.aggregate.hv_100.mean,
            hv_100_std: r.aggregate.hv_100.std,
            relative_improvement: r.aggregate.relative_improvement.mean,
            ratio: f64::NAN,
            weight_cv: r.weight_cv,
        });
    }
    let reference = rows
        .iter()
        .position(|r| same_value(&r.value, &default_value))
        .unwrap_or(0);
    let denom = rows[reference].hv_100_mean;
    for r in &mut rows {
        r.ratio = r.hv_100_mean / denom;
    }
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        fs::write(o.join("sweep.csv"), sweep_csv(&rows))?;
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut text = String::from("axis,value,hv_100_mean,hv_100_std,relative_improvement,ratio,weight_cv\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.axis, r.value, r.hv_100_mean, r.hv_100_std, r.relative_improvement, r.ratio, r.weight_cv
        ));
    }
    text
}
