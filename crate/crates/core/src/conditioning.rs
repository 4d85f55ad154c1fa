//! Conditioning targets for sampling.
//!
//! Dataset points are paired with reference directions front by front: each
//! direction first takes the front member nearest to it (perpendicular
//! distance), then the rest of the front goes, one point at a time, to the
//! direction with the fewest points so far. The paired points are snapped onto
//! their direction, pulled toward the ideal point, and jittered with Gaussian
//! noise. Everything happens in ideal/nadir space, where the ideal point is the
//! origin.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PcdError, Result};
use crate::pareto::{non_dominated_sort, perp_unchecked, unit, FrontPartition, NormalizationStats};
use crate::refdirs::ReferenceDirections;
use crate::rng;
use crate::scalar::Scalar;

/// Selected `(point, direction)` pairs, in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentSet {
    pub pairs: Vec<(usize, usize)>,
    pub niche_counts: Vec<usize>,
}

pub fn assign_points<T: Scalar>(
    fronts: &FrontPartition,
    y_norm: ArrayView2<T>,
    directions: &ReferenceDirections<T>,
    j: usize,
) -> Result<AssignmentSet> {
    let n = y_norm.nrows();
    if j > n {
        return Err(PcdError::InvalidArgument(format!(
            "cannot select {j} pairs from {n} points"
        )));
    }
    if fronts.len() != n {
        return Err(PcdError::LengthMismatch {
            expected: n,
            got: fronts.len(),
        });
    }
    if directions.m() != y_norm.ncols() {
        return Err(PcdError::LengthMismatch {
            expected: y_norm.ncols(),
            got: directions.m(),
        });
    }
    if directions.is_empty() {
        return Err(PcdError::Empty("no reference directions"));
    }
    let units = directions.unit_rows();
    let l = units.nrows();
    let mut pairs = Vec::with_capacity(j);
    let mut niche = vec![0usize; l];

    'fronts: for front in &fronts.fronts {
        if pairs.len() >= j {
            break;
        }
        let mut taken = vec![false; front.len()];
        for (wi, w) in units.rows().into_iter().enumerate() {
            let w = w.to_vec();
            let mut best = 0;
            let mut best_d = T::infinity();
            for (pos, &i) in front.iter().enumerate() {
                let d = perp_unchecked(&y_norm.row(i).to_vec(), &w);
                if d < best_d {
                    best_d = d;
                    best = pos;
                }
            }
            pairs.push((front[best], wi));
            niche[wi] += 1;
            taken[best] = true;
            if pairs.len() == j {
                break 'fronts;
            }
        }
        for (pos, &i) in front.iter().enumerate() {
            if taken[pos] {
                continue;
            }
            let wi = argmin(&niche);
            pairs.push((i, wi));
            niche[wi] += 1;
            if pairs.len() == j {
                break 'fronts;
            }
        }
    }
    Ok(AssignmentSet {
        pairs,
        niche_counts: niche,
    })
}

fn argmin(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c < v[best] {
            best = i;
        }
    }
    best
}

/// Snap `y` onto the ray through `w` and shrink it by `1 − distance`:
/// `(1 − distance) · max(y·ŵ, 0) · ŵ`.
pub fn extrapolate<T: Scalar>(y: &[T], w: &[T], distance: T) -> Result<Vec<T>> {
    if y.len() != w.len() {
        return Err(PcdError::LengthMismatch {
            expected: w.len(),
            got: y.len(),
        });
    }
    let w_hat = unit(w)?;
    let t = y.iter().zip(&w_hat).map(|(&a, &b)| a * b).sum::<T>().max(T::zero());
    let scale = (T::one() - distance) * t;
    Ok(w_hat.iter().map(|&v| scale * v).collect())
}

/// Where a conditioning target came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProvenance<T> {
    pub source: usize,
    /// `None` for strategies that do not use reference directions.
    pub direction: Option<usize>,
    pub distance: T,
    pub noise: Vec<T>,
}

/// `Q × m` targets in ideal/nadir space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningSet<T> {
    pub targets: Array2<T>,
    pub provenance: Vec<TargetProvenance<T>>,
}

impl<T: Scalar> ConditioningSet<T> {
    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.nrows() == 0
    }

    /// Rows `target_*, source, direction, distance, noise_*`.
    pub fn to_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let m = self.targets.ncols();
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..m)
            .map(|j| format!("target{j}"))
            .chain(["source".into(), "direction".into(), "distance".into()])
            .chain((0..m).map(|j| format!("noise{j}")))
            .collect();
        w.write_record(&header)?;
        for (row, p) in self.targets.rows().into_iter().zip(&self.provenance) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            rec.push(p.source.to_string());
            rec.push(p.direction.map(|d| d.to_string()).unwrap_or_default());
            rec.push(format!("{}", p.distance));
            rec.extend(p.noise.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningParams {
    pub j: usize,
    pub q: usize,
    pub distance: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ConditioningParams {
    fn default() -> Self {
        Self {
            j: 32,
            q: 256,
            distance: 0.1,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

fn noise_for_slot<T: Scalar>(seed: u64, slot: usize, m: usize, sigma: f64) -> Vec<T> {
    if sigma == 0.0 {
        return vec![T::zero(); m];
    }
    let mut r = rng::stream(seed, slot as u64);
    (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            T::lit(sigma * z)
        })
        .collect()
}

fn check_params(p: &ConditioningParams) -> Result<()> {
    if p.j < 1 || p.q < p.j {
        return Err(PcdError::InvalidArgument(format!(
            "need Q >= J >= 1, got J = {}, Q = {}",
            p.j, p.q
        )));
    }
    if !(0.0..1.0).contains(&p.distance) {
        return Err(PcdError::InvalidArgument(format!(
            "extrapolation distance must lie in [0, 1), got {}",
            p.distance
        )));
    }
    if p.noise_sigma < 0.0 {
        return Err(PcdError::InvalidArgument("noise_sigma must be >= 0".into()));
    }
    Ok(())
}

fn normalized_objectives<T: Scalar>(y: ArrayView2<T>, stats: &NormalizationStats<T>) -> Array2<T> {
    crate::indicators::normalize_objectives(y, stats)
}

/// Reference-direction targets: `J` assigned pairs tiled round-robin over `Q`
/// slots, extrapolated, then perturbed with per-slot noise.
pub fn generate_conditioning_set<T: Scalar>(
    y: ArrayView2<T>,
    stats: &NormalizationStats<T>,
    directions: &ReferenceDirections<T>,
    params: &ConditioningParams,
) -> Result<ConditioningSet<T>> {
    check_params(params)?;
    let y_norm = normalized_objectives(y, stats);
    let fronts = non_dominated_sort(y_norm.view())?;
    let assignment = assign_points(&fronts, y_norm.view(), directions, params.j)?;
    let m = y.ncols();
    let distance = T::lit(params.distance);

    let mut targets = Array2::zeros((params.q, m));
    let mut provenance = Vec::with_capacity(params.q);
    for slot in 0..params.q {
        let (src, dir) = assignment.pairs[slot % assignment.pairs.len()];
        let base = extrapolate(&y_norm.row(src).to_vec(), &directions.w.row(dir).to_vec(), distance)?;
        let noise = noise_for_slot::<T>(params.seed, slot, m, params.noise_sigma);
        for k in 0..m {
            targets[[slot, k]] = base[k] + noise[k];
        }
        provenance.push(TargetProvenance {
            source: src,
            direction: Some(dir),
            distance,
            noise,
        });
    }
    Ok(ConditioningSet {
        targets,
        provenance,
    })
}

/// How conditioning targets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningStrategy {
    /// Reference-direction assignment, extrapolation and noise.
    RefDir,
    /// The dataset's non-dominated points as they are.
    DBest,
    /// Random non-dominated points pulled toward the ideal point, plus noise.
    Ideal,
    /// Dataset points in front order, to test reconstruction of the data.
    DatasetFronts,
}

impl FromStr for ConditioningStrategy {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refdir" | "ref-dir" => Ok(Self::RefDir),
            "dbest" | "d-best" => Ok(Self::DBest),
            "ideal" => Ok(Self::Ideal),
            "dataset-fronts" => Ok(Self::DatasetFronts),
            _ => Err(PcdError::InvalidArgument(format!("unknown conditioning strategy `{s}`"))),
        }
    }
}

impl fmt::Display for ConditioningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RefDir => "refdir",
            Self::DBest => "dbest",
            Self::Ideal => "ideal",
            Self::DatasetFronts => "dataset-fronts",
        })
    }
}

/// Targets for any [`ConditioningStrategy`]. `directions` is only read by
/// [`ConditioningStrategy::RefDir`].
pub fn generate_with_strategy<T: Scalar>(
    strategy: ConditioningStrategy,
    y: ArrayView2<T>,
    stats: &NormalizationStats<T>,
    directions: &ReferenceDirections<T>,
    params: &ConditioningParams,
) -> Result<ConditioningSet<T>> {
    if strategy == ConditioningStrategy::RefDir {
        return generate_conditioning_set(y, stats, directions, params);
    }
    if params.q < 1 {
        return Err(PcdError::InvalidArgument("Q must be >= 1".into()));
    }
    let y_norm = normalized_objectives(y, stats);
    let fronts = non_dominated_sort(y_norm.view())?;
    let m = y.ncols();
    let q = params.q;
    let first = fronts.first();

    let (sources, distance, sigma): (Vec<usize>, f64, f64) = match strategy {
        ConditioningStrategy::DBest => {
            let src = (0..q).map(|s| first[(s * first.len() / q.max(1)) % first.len()]);
            let src: Vec<usize> = if first.len() >= q {
                src.collect()
            } else {
                (0..q).map(|s| first[s % first.len()]).collect()
            };
            (src, 0.0, 0.0)
        }
        ConditioningStrategy::Ideal => {
            use rand::Rng as _;
            let mut r = rng::stream(params.seed, u64::MAX);
            let src = (0..q).map(|_| first[r.random_range(0..first.len())]).collect();
            (src, params.distance, params.noise_sigma)
        }
        ConditioningStrategy::DatasetFronts => {
            let order: Vec<usize> = fronts.fronts.iter().flatten().cloned().collect();
            ((0..q).map(|s| order[s % order.len()]).collect(), 0.0, 0.0)
        }
        ConditioningStrategy::RefDir => unreachable!(),
    };
    if !(0.0..1.0).contains(&distance) {
        return Err(PcdError::InvalidArgument(format!(
            "extrapolation distance must lie in [0, 1), got {distance}"
        )));
    }

    let shrink = T::one() - T::lit(distance);
    let mut targets = Array2::zeros((q, m));
    let mut provenance = Vec::with_capacity(q);
    for (slot, &src) in sources.iter().enumerate() {
        let noise = noise_for_slot::<T>(params.seed, slot, m, sigma);
        for k in 0..m {
            targets[[slot, k]] = shrink * y_norm[[src, k]] + noise[k];
        }
        provenance.push(TargetProvenance {
            source: src,
            direction: None,
            distance: T::lit(distance),
            noise,
        });
    }
    Ok(ConditioningSet {
        targets,
        provenance,
    })
}
