//! Synthetic test problems and seeded offline-dataset generation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::OfflineDataset;
use crate::error::{PcdError, Result};
use crate::indicators::survival_order;
use crate::pareto::non_dominated_sort;
use crate::refdirs::das_dennis_count;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Zdt1,
    Zdt2,
    Zdt3,
    Zdt4,
    Zdt6,
    Dtlz1,
    Dtlz7,
    OmniTest,
    Vlmop1,
    Vlmop2,
    Vlmop3,
}

impl TaskKind {
    pub const ALL: [TaskKind; 11] = [
        TaskKind::Zdt1,
        TaskKind::Zdt2,
        TaskKind::Zdt3,
        TaskKind::Zdt4,
        TaskKind::Zdt6,
        TaskKind::Dtlz1,
        TaskKind::Dtlz7,
        TaskKind::OmniTest,
        TaskKind::Vlmop1,
        TaskKind::Vlmop2,
        TaskKind::Vlmop3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Zdt1 => "zdt1",
            TaskKind::Zdt2 => "zdt2",
            TaskKind::Zdt3 => "zdt3",
            TaskKind::Zdt4 => "zdt4",
            TaskKind::Zdt6 => "zdt6",
            TaskKind::Dtlz1 => "dtlz1",
            TaskKind::Dtlz7 => "dtlz7",
            TaskKind::OmniTest => "omnitest",
            TaskKind::Vlmop1 => "vlmop1",
            TaskKind::Vlmop2 => "vlmop2",
            TaskKind::Vlmop3 => "vlmop3",
        }
    }

    fn default_m(self) -> usize {
        match self {
            TaskKind::Dtlz1 | TaskKind::Dtlz7 | TaskKind::Vlmop3 => 3,
            _ => 2,
        }
    }

    fn default_d(self, m: usize) -> usize {
        match self {
            TaskKind::Zdt1 | TaskKind::Zdt2 | TaskKind::Zdt3 => 30,
            TaskKind::Zdt4 | TaskKind::Zdt6 => 10,
            TaskKind::Dtlz1 => m + 4,
            TaskKind::Dtlz7 => m + 19,
            TaskKind::OmniTest => 2,
            TaskKind::Vlmop1 => 1,
            TaskKind::Vlmop2 => 2,
            TaskKind::Vlmop3 => 2,
        }
    }

    fn min_d(self, m: usize) -> usize {
        match self {
            TaskKind::Dtlz1 | TaskKind::Dtlz7 => m,
            TaskKind::Vlmop3 => 2,
            TaskKind::Zdt1 | TaskKind::Zdt2 | TaskKind::Zdt3 | TaskKind::Zdt4 | TaskKind::Zdt6 => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| PcdError::UnknownTask(s.to_string()))
    }
}

/// A box-constrained test problem with a fixed dimension and objective count.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub kind: TaskKind,
    pub d: usize,
    pub m: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Task {
    /// Conventional dimensions unless overridden. Only the DTLZ problems accept
    /// an objective count other than their default.
    pub fn new(kind: TaskKind, d: Option<usize>, m: Option<usize>) -> Result<Self> {
        let m = m.unwrap_or_else(|| kind.default_m());
        match kind {
            TaskKind::Dtlz1 | TaskKind::Dtlz7 => {
                if !(2..=10).contains(&m) {
                    return Err(PcdError::InvalidArgument(format!(
                        "{kind} supports 2..=10 objectives, got {m}"
                    )));
                }
            }
            _ if m != kind.default_m() => {
                return Err(PcdError::InvalidArgument(format!(
                    "{kind} has exactly {} objectives",
                    kind.default_m()
                )))
            }
            _ => {}
        }
        let d = d.unwrap_or_else(|| kind.default_d(m));
        if d < kind.min_d(m) {
            return Err(PcdError::InvalidArgument(format!(
                "{kind} with m = {m} needs d >= {}",
                kind.min_d(m)
            )));
        }
        let (lower, upper) = match kind {
            TaskKind::Zdt4 => {
                let mut lo = vec![-5.0; d];
                let mut hi = vec![5.0; d];
                lo[0] = 0.0;
                hi[0] = 1.0;
                (lo, hi)
            }
            TaskKind::OmniTest => (vec![0.0; d], vec![6.0; d]),
            TaskKind::Vlmop1 => (vec![-2.0; d], vec![4.0; d]),
            TaskKind::Vlmop2 => (vec![-2.0; d], vec![2.0; d]),
            TaskKind::Vlmop3 => (vec![-3.0; d], vec![3.0; d]),
            _ => (vec![0.0; d], vec![1.0; d]),
        };
        Ok(Self {
            kind,
            d,
            m,
            lower,
            upper,
        })
    }

    pub fn by_name(name: &str, d: Option<usize>, m: Option<usize>) -> Result<Self> {
        Self::new(name.parse()?, d, m)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Objective vector at `x`. Points outside the box are rejected; callers
    /// clip first.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(PcdError::LengthMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        for (j, &v) in x.iter().enumerate() {
            if !(v >= self.lower[j] && v <= self.upper[j]) {
                return Err(PcdError::OutOfBounds(format!("{}: x[{j}] = {v}", self.kind)));
            }
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self.kind {
            TaskKind::Zdt1 | TaskKind::Zdt2 | TaskKind::Zdt3 => {
                let f1 = x[0];
                let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (n - 1) as f64;
                let r = f1 / g;
                let h = match self.kind {
                    TaskKind::Zdt1 => 1.0 - r.sqrt(),
                    TaskKind::Zdt2 => 1.0 - r * r,
                    _ => 1.0 - r.sqrt() - r * (10.0 * PI * f1).sin(),
                };
                vec![f1, g * h]
            }
            TaskKind::Zdt4 => {
                let f1 = x[0];
                let g = 1.0
                    + 10.0 * (n - 1) as f64
                    + x[1..]
                        .iter()
                        .map(|&v| v * v - 10.0 * (4.0 * PI * v).cos())
                        .sum::<f64>();
                vec![f1, g * (1.0 - (f1 / g).sqrt())]
            }
            TaskKind::Zdt6 => {
                let f1 = 1.0 - (-4.0 * x[0]).exp() * (6.0 * PI * x[0]).sin().powi(6);
                let g = 1.0 + 9.0 * (x[1..].iter().sum::<f64>() / (n - 1) as f64).powf(0.25);
                vec![f1, g * (1.0 - (f1 / g).powi(2))]
            }
            TaskKind::Dtlz1 => {
                let m = self.m;
                let tail = &x[m - 1..];
                let g = 100.0
                    * (tail.len() as f64
                        + tail
                            .iter()
                            .map(|&v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos())
                            .sum::<f64>());
                (0..m)
                    .map(|i| {
                        let mut f = 0.5 * (1.0 + g);
                        for &v in &x[..m - 1 - i] {
                            f *= v;
                        }
                        if i > 0 {
                            f *= 1.0 - x[m - 1 - i];
                        }
                        f
                    })
                    .collect()
            }
            TaskKind::Dtlz7 => {
                let m = self.m;
                let tail = &x[m - 1..];
                let g = 1.0 + 9.0 * tail.iter().sum::<f64>() / tail.len().max(1) as f64;
                let mut f: Vec<f64> = x[..m - 1].to_vec();
                let h = m as f64
                    - f.iter()
                        .map(|&fi| fi / (1.0 + g) * (1.0 + (3.0 * PI * fi).sin()))
                        .sum::<f64>();
                f.push((1.0 + g) * h);
                f
            }
            TaskKind::OmniTest => vec![
                x.iter().map(|&v| (PI * v).sin()).sum(),
                x.iter().map(|&v| (PI * v).cos()).sum(),
            ],
            TaskKind::Vlmop1 => {
                vec![
                    x.iter().map(|&v| v * v).sum::<f64>() / n as f64,
                    x.iter().map(|&v| (v - 2.0).powi(2)).sum::<f64>() / n as f64,
                ]
            }
            TaskKind::Vlmop2 => {
                let c = 1.0 / (n as f64).sqrt();
                vec![
                    1.0 - (-x.iter().map(|&v| (v - c).powi(2)).sum::<f64>()).exp(),
                    1.0 - (-x.iter().map(|&v| (v + c).powi(2)).sum::<f64>()).exp(),
                ]
            }
            TaskKind::Vlmop3 => {
                let (a, b) = (x[0], x[1]);
                let r2 = a * a + b * b;
                vec![
                    0.5 * r2 + r2.sin(),
                    (3.0 * a - 2.0 * b + 4.0).powi(2) / 8.0 + (a - b + 1.0).powi(2) / 27.0 + 15.0,
                    1.0 / (r2 + 1.0) - 1.1 * (-r2).exp(),
                ]
            }
        }
    }

    pub fn has_known_front(&self) -> bool {
        matches!(
            self.kind,
            TaskKind::Zdt1
                | TaskKind::Zdt2
                | TaskKind::Zdt3
                | TaskKind::Zdt4
                | TaskKind::Zdt6
                | TaskKind::Dtlz1
                | TaskKind::Dtlz7
        )
    }

    /// `n` points on the analytic Pareto front.
    pub fn sample_true_front(&self, n: usize) -> Result<Array2<f64>> {
        if !self.has_known_front() {
            return Err(PcdError::NoKnownFront(self.name().into()));
        }
        if n == 0 {
            return Ok(Array2::zeros((0, self.m)));
        }
        let lin = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let rows: Vec<Vec<f64>> = match self.kind {
            // uniform in f2 so that the n = 3 front is {(0,1), (1/4,1/2), (1,0)}
            TaskKind::Zdt1 | TaskKind::Zdt4 => (0..n)
                .map(|i| {
                    let t = lin(i);
                    vec![t * t, 1.0 - t]
                })
                .collect(),
            TaskKind::Zdt2 => (0..n)
                .map(|i| {
                    let f1 = lin(i);
                    vec![f1, 1.0 - f1 * f1]
                })
                .collect(),
            TaskKind::Zdt6 => {
                let lo = 0.280_775_319_1;
                (0..n)
                    .map(|i| {
                        let f1 = lo + (1.0 - lo) * lin(i);
                        vec![f1, 1.0 - f1 * f1]
                    })
                    .collect()
            }
            TaskKind::Zdt3 => zdt3_front(n),
            TaskKind::Dtlz1 => {
                let w = das_dennis_count::<f64>(self.m, n)?;
                w.w.rows().into_iter().map(|r| r.iter().map(|v| 0.5 * v).collect()).collect()
            }
            TaskKind::Dtlz7 => return dtlz7_front(self, n),
            _ => unreachable!(),
        };
        Ok(rows_to_array(rows, self.m))
    }
}

fn rows_to_array(rows: Vec<Vec<f64>>, m: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).expect("rectangular")
}

const ZDT3_SEGMENTS: [(f64, f64); 5] = [
    (0.0, 0.083_001_534_9),
    (0.182_228_728_0, 0.257_762_363_4),
    (0.409_313_674_8, 0.453_882_104_1),
    (0.618_396_794_4, 0.652_511_703_8),
    (0.823_331_798_3, 0.851_832_865_4),
];

fn zdt3_front(n: usize) -> Vec<Vec<f64>> {
    let total: f64 = ZDT3_SEGMENTS.iter().map(|(a, b)| b - a).sum();
    (0..n)
        .map(|i| {
            let mut s = if n == 1 { 0.0 } else { total * i as f64 / (n - 1) as f64 };
            let mut f1 = ZDT3_SEGMENTS[4].1;
            for &(a, b) in &ZDT3_SEGMENTS {
                if s <= b - a {
                    f1 = a + s;
                    break;
                }
                s -= b - a;
            }
            vec![f1, 1.0 - f1.sqrt() - f1 * (10.0 * PI * f1).sin()]
        })
        .collect()
}

/// DTLZ7's front is the non-dominated part of its `g = 1` surface; refine a
/// grid over the first `m − 1` variables until it yields at least `n` points,
/// then take a stride.
fn dtlz7_front(task: &Task, n: usize) -> Result<Array2<f64>> {
    let m = task.m;
    let mut per_dim = 2usize;
    loop {
        let total = per_dim.pow((m - 1) as u32);
        let mut cand = Array2::zeros((total, m));
        let mut x = vec![0.0; task.d];
        for (c, mut row) in cand.rows_mut().into_iter().enumerate() {
            let mut rem = c;
            for v in x.iter_mut().take(m - 1) {
                *v = (rem % per_dim) as f64 / (per_dim - 1) as f64;
                rem /= per_dim;
            }
            let f = task.eval_unchecked(&x);
            row.iter_mut().zip(f).for_each(|(a, b)| *a = b);
        }
        let front = non_dominated_sort(cand.view())?;
        let first = front.first();
        if first.len() >= n {
            let picked: Vec<usize> = (0..n).map(|i| first[i * first.len() / n]).collect();
            return Ok(cand.select(Axis(0), &picked));
        }
        per_dim = (per_dim as f64 * 1.5).ceil() as usize;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    Uniform,
    Lhs,
    /// Every individual evaluated by a short NSGA-II run, pooled.
    EaCollected,
}

impl FromStr for SamplingStrategy {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "lhs" => Ok(Self::Lhs),
            "ea-collected" | "ea" => Ok(Self::EaCollected),
            _ => Err(PcdError::InvalidArgument(format!("unknown sampling strategy `{s}`"))),
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Lhs => "lhs",
            Self::EaCollected => "ea-collected",
        })
    }
}

/// Population size of the `ea-collected` strategy; the number of generations
/// follows from the requested dataset size.
pub const EA_POPULATION: usize = 100;

pub fn generate_offline_dataset(
    task: &Task,
    n: usize,
    seed: u64,
    strategy: SamplingStrategy,
) -> Result<OfflineDataset> {
    if n < 2 {
        return Err(PcdError::InvalidArgument(format!("dataset size must be >= 2, got {n}")));
    }
    let mut rng = rng::seeded(seed);
    let x = match strategy {
        SamplingStrategy::Uniform => {
            let mut x = Array2::zeros((n, task.d));
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = task.lower[j] + rng.random::<f64>() * (task.upper[j] - task.lower[j]);
                }
            }
            x
        }
        SamplingStrategy::Lhs => {
            let mut x = Array2::zeros((n, task.d));
            let mut strata: Vec<usize> = (0..n).collect();
            for j in 0..task.d {
                strata.shuffle(&mut rng);
                for (i, &s) in strata.iter().enumerate() {
                    let u = (s as f64 + rng.random::<f64>()) / n as f64;
                    x[[i, j]] = task.lower[j] + u * (task.upper[j] - task.lower[j]);
                }
            }
            x
        }
        SamplingStrategy::EaCollected => nsga2_collect(task, n, EA_POPULATION, &mut rng),
    };
    let mut y = Array2::zeros((n, task.m));
    for (xr, mut yr) in x.rows().into_iter().zip(y.rows_mut()) {
        let f = task.evaluate(xr.as_slice().expect("row-major"))?;
        yr.iter_mut().zip(f).for_each(|(a, b)| *a = b);
    }
    OfflineDataset::new(task.name(), x, y, task.lower.clone(), task.upper.clone(), seed)
}

const SBX_ETA: f64 = 15.0;
const SBX_PROB: f64 = 0.9;
const PM_ETA: f64 = 20.0;

/// Runs NSGA-II (SBX + polynomial mutation) and returns the first `n`
/// individuals it evaluates, in evaluation order.
fn nsga2_collect(task: &Task, n: usize, pop_size: usize, rng: &mut rng::Rng) -> Array2<f64> {
    let d = task.d;
    let pop_size = pop_size.min(n).max(2);
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pool_y: Vec<Vec<f64>> = Vec::with_capacity(n);

    let mut pop: Vec<usize> = Vec::with_capacity(pop_size);
    for _ in 0..pop_size {
        let x: Vec<f64> = (0..d)
            .map(|j| task.lower[j] + rng.random::<f64>() * (task.upper[j] - task.lower[j]))
            .collect();
        pool_y.push(task.eval_unchecked(&x));
        pool.push(x);
        pop.push(pool.len() - 1);
    }

    while pool.len() < n {
        let y_pop = rows_to_array(pop.iter().map(|&i| pool_y[i].clone()).collect(), task.m);
        let order = survival_order(y_pop.view()).expect("finite objectives");
        // position in survival order doubles as tournament fitness
        let mut fitness = vec![0usize; pop.len()];
        for (pos, &i) in order.iter().enumerate() {
            fitness[i] = pos;
        }
        let tournament = |rng: &mut rng::Rng| {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            if fitness[a] <= fitness[b] {
                pop[a]
            } else {
                pop[b]
            }
        };

        let mut offspring = Vec::with_capacity(pop_size);
        while offspring.len() < pop_size && pool.len() < n {
            let p1 = tournament(rng);
            let p2 = tournament(rng);
            let (mut c1, mut c2) = sbx(&pool[p1], &pool[p2], task, rng);
            polynomial_mutation(&mut c1, task, rng);
            polynomial_mutation(&mut c2, task, rng);
            for c in [c1, c2] {
                if offspring.len() < pop_size && pool.len() < n {
                    pool_y.push(task.eval_unchecked(&c));
                    pool.push(c);
                    offspring.push(pool.len() - 1);
                }
            }
        }

        let merged: Vec<usize> = pop.iter().chain(&offspring).cloned().collect();
        let y_merged = rows_to_array(merged.iter().map(|&i| pool_y[i].clone()).collect(), task.m);
        let order = survival_order(y_merged.view()).expect("finite objectives");
        pop = order.into_iter().take(pop_size).map(|k| merged[k]).collect();
    }
    rows_to_array(pool, d)
}

fn sbx(a: &[f64], b: &[f64], task: &Task, rng: &mut rng::Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    if rng.random::<f64>() > SBX_PROB {
        return (c1, c2);
    }
    for j in 0..a.len() {
        if rng.random::<f64>() > 0.5 || (a[j] - b[j]).abs() < 1e-14 {
            continue;
        }
        let u: f64 = rng.random();
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / (SBX_ETA + 1.0))
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (SBX_ETA + 1.0))
        };
        let mid = 0.5 * (a[j] + b[j]);
        let half = 0.5 * (a[j] - b[j]);
        c1[j] = (mid + beta * half).clamp(task.lower[j], task.upper[j]);
        c2[j] = (mid - beta * half).clamp(task.lower[j], task.upper[j]);
    }
    (c1, c2)
}

fn polynomial_mutation(x: &mut [f64], task: &Task, rng: &mut rng::Rng) {
    let p = 1.0 / x.len() as f64;
    for j in 0..x.len() {
        if rng.random::<f64>() >= p {
            continue;
        }
        let (lo, hi) = (task.lower[j], task.upper[j]);
        let u: f64 = rng.random();
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (PM_ETA + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (PM_ETA + 1.0))
        };
        x[j] = (x[j] + delta * (hi - lo)).clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zdt1_examples() {
        let t = Task::new(TaskKind::Zdt1, Some(8), None).unwrap();
        assert_eq!(t.evaluate(&[0.0; 8]).unwrap(), vec![0.0, 1.0]);
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        assert_eq!(t.evaluate(&x).unwrap(), vec![1.0, 0.0]);
        x[1] = 1.5;
        assert!(matches!(t.evaluate(&x), Err(PcdError::OutOfBounds(_))));
    }

    #[test]
    fn dtlz1_on_front_sums_to_half() {
        for m in 3..=6 {
            let t = Task::new(TaskKind::Dtlz1, None, Some(m)).unwrap();
            let mut x = vec![0.5; t.d];
            x[0] = 0.3;
            x[1] = 0.8;
            let f = t.evaluate(&x).unwrap();
            assert_eq!(f.len(), m);
            assert!((f.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn vlmop2_symmetric_at_origin() {
        let t = Task::new(TaskKind::Vlmop2, None, None).unwrap();
        let f = t.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(f[0], f[1]);
    }

    #[test]
    fn fronts() {
        let t = Task::new(TaskKind::Zdt1, None, None).unwrap();
        let f = t.sample_true_front(3).unwrap();
        assert_eq!(f, ndarray::array![[0.0, 1.0], [0.25, 0.5], [1.0, 0.0]]);

        let t = Task::new(TaskKind::Zdt2, None, None).unwrap();
        for r in t.sample_true_front(11).unwrap().rows() {
            assert!((r[1] - (1.0 - r[0] * r[0])).abs() < 1e-15);
        }

        let t = Task::new(TaskKind::Dtlz1, None, Some(3)).unwrap();
        let f = t.sample_true_front(20).unwrap();
        assert_eq!(f.nrows(), 20);
        for r in f.rows() {
            assert!((r.sum() - 0.5).abs() < 1e-12 && r.iter().all(|&v| v >= 0.0));
        }

        let t = Task::new(TaskKind::Dtlz7, None, Some(4)).unwrap();
        let f = t.sample_true_front(50).unwrap();
        assert_eq!(f.dim(), (50, 4));

        let t = Task::new(TaskKind::OmniTest, None, None).unwrap();
        assert!(matches!(t.sample_true_front(5), Err(PcdError::NoKnownFront(_))));
    }

    #[test]
    fn task_construction() {
        assert_eq!(Task::by_name("ZDT4", None, None).unwrap().lower[1], -5.0);
        assert!(Task::by_name("zdt9", None, None).is_err());
        assert!(Task::new(TaskKind::Zdt1, None, Some(3)).is_err());
        assert_eq!(Task::new(TaskKind::Dtlz7, None, Some(5)).unwrap().d, 24);
        assert_eq!(Task::new(TaskKind::Dtlz1, None, None).unwrap().d, 7);
    }

    #[test]
    fn datasets_are_reproducible() {
        let t = Task::new(TaskKind::Zdt1, Some(5), None).unwrap();
        for s in [SamplingStrategy::Uniform, SamplingStrategy::Lhs, SamplingStrategy::EaCollected] {
            let a = generate_offline_dataset(&t, 300, 11, s).unwrap();
            let b = generate_offline_dataset(&t, 300, 11, s).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            assert_eq!(a.n(), 300);
        }
    }

    #[test]
    fn lhs_fills_every_stratum() {
        let t = Task::new(TaskKind::Zdt1, Some(4), None).unwrap();
        let n = 97;
        let ds = generate_offline_dataset(&t, n, 5, SamplingStrategy::Lhs).unwrap();
        for j in 0..4 {
            let mut seen = vec![false; n];
            for &v in ds.x.column(j) {
                let s = ((v * n as f64).floor() as usize).min(n - 1);
                assert!(!seen[s]);
                seen[s] = true;
            }
        }
    }

    #[test]
    fn uniform_zdt1_never_below_front() {
        let t = Task::new(TaskKind::Zdt1, None, None).unwrap();
        let ds = generate_offline_dataset(&t, 2000, 3, SamplingStrategy::Uniform).unwrap();
        for r in ds.y.rows() {
            assert!(r[1] >= 1.0 - r[0].sqrt() - 1e-12);
        }
    }

    #[test]
    fn ea_collection_improves_on_random_sampling() {
        let t = Task::new(TaskKind::Zdt1, None, None).unwrap();
        let ds = generate_offline_dataset(&t, 3000, 3, SamplingStrategy::EaCollected).unwrap();
        let first = ds.y.row(0)[1] + ds.y.row(1)[1];
        let best_late = ds
            .y
            .rows()
            .into_iter()
            .skip(2900)
            .map(|r| r[1] + r[0])
            .fold(f64::INFINITY, f64::min);
        assert!(best_late < first);
    }
}
