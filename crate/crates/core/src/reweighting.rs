//! Grid-binned sample weights that favour dense, rarely dominated regions.
//!
//! A cell `B` of the objective grid gets the raw weight
//! `|B| / (|B| + K) · exp(−mean_{b∈B} ô(b) / τ)`, where `ô` is the dominance
//! count divided by `N − 1`. Members inherit their cell's weight and the
//! weights are rescaled to mean one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{PcdError, Result};
use crate::pareto::{DominanceStats, FrontPartition};
use crate::scalar::Scalar;

/// Equal-width grid with `bins_per_dim` bins along every objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid<T> {
    pub bins_per_dim: usize,
    pub mins: Vec<T>,
    pub maxs: Vec<T>,
}

pub type Cell = Vec<usize>;

pub fn build_grid<T: Scalar>(y: ArrayView2<T>, bins_per_dim: usize) -> Result<BinGrid<T>> {
    if bins_per_dim < 1 {
        return Err(PcdError::InvalidArgument("bins_per_dim must be >= 1".into()));
    }
    if y.nrows() == 0 {
        return Err(PcdError::Empty("build_grid needs at least one point"));
    }
    let m = y.ncols();
    let mins: Vec<T> = (0..m)
        .map(|j| y.column(j).iter().cloned().fold(T::infinity(), T::min))
        .collect();
    let maxs: Vec<T> = (0..m)
        .map(|j| {
            let hi = y.column(j).iter().cloned().fold(T::neg_infinity(), T::max);
            // a flat dimension still needs a non-empty extent
            if hi > mins[j] {
                hi
            } else {
                mins[j] + T::one()
            }
        })
        .collect();
    Ok(BinGrid {
        bins_per_dim,
        mins,
        maxs,
    })
}

impl<T: Scalar> BinGrid<T> {
    /// Per-dimension bin indices. Values on the upper edge fall in the last
    /// bin; values outside the range are clamped.
    pub fn cell_of(&self, y: &[T]) -> Cell {
        let nb = T::of_usize(self.bins_per_dim);
        y.iter()
            .enumerate()
            .map(|(j, &v)| {
                let t = (v - self.mins[j]) / (self.maxs[j] - self.mins[j]) * nb;
                let k = t.floor().max(T::zero()).to_usize().unwrap_or(0);
                k.min(self.bins_per_dim - 1)
            })
            .collect()
    }

    /// Occupied cells with their members, in cell order.
    pub fn assign(&self, y: ArrayView2<T>) -> BTreeMap<Cell, Vec<usize>> {
        let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        for (i, row) in y.rows().into_iter().enumerate() {
            cells.entry(self.cell_of(&row.to_vec())).or_default().push(i);
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights<T> {
    /// Per-sample weights, mean one.
    pub w: Vec<T>,
    pub k: T,
    pub tau: T,
}

/// Raw weight of a cell with `size` members and mean normalized dominance
/// number `mean_dom`.
pub fn cell_weight<T: Scalar>(size: usize, mean_dom: T, k: T, tau: T) -> T {
    let s = T::of_usize(size);
    s / (s + k) * (-mean_dom / tau).exp()
}

pub fn compute_weights<T: Scalar>(
    y: ArrayView2<T>,
    grid: &BinGrid<T>,
    dom: &DominanceStats<T>,
    k: T,
    tau: T,
) -> Result<SampleWeights<T>> {
    if !(k > T::zero()) || !(tau > T::zero()) {
        return Err(PcdError::InvalidArgument(format!(
            "K and tau must be positive, got K = {k}, tau = {tau}"
        )));
    }
    if dom.normalized.len() != y.nrows() {
        return Err(PcdError::LengthMismatch {
            expected: y.nrows(),
            got: dom.normalized.len(),
        });
    }
    let mut w = vec![T::zero(); y.nrows()];
    for members in grid.assign(y).values() {
        let mean = members.iter().map(|&i| dom.normalized[i]).sum::<T>() / T::of_usize(members.len());
        let cw = cell_weight(members.len(), mean, k, tau);
        for &i in members {
            w[i] = cw;
        }
    }
    rescale_to_unit_mean(&mut w);
    Ok(SampleWeights { w, k, tau })
}

fn rescale_to_unit_mean<T: Scalar>(w: &mut [T]) {
    let total: T = w.iter().cloned().sum();
    if total > T::zero() {
        let scale = T::of_usize(w.len()) / total;
        w.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Weight one for the best fronts, zero elsewhere. Whole fronts are kept, in
/// rank order, until at least `fraction · N` samples are in.
pub fn prune_weights<T: Scalar>(fronts: &FrontPartition, fraction: f64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PcdError::InvalidArgument(format!(
            "prune fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = fronts.len();
    let target = (fraction * n as f64).ceil() as usize;
    let mut w = vec![T::zero(); n];
    let mut kept = 0;
    for front in &fronts.fronts {
        if kept >= target {
            break;
        }
        for &i in front {
            w[i] = T::one();
        }
        kept += front.len();
    }
    Ok(w)
}

/// Coefficient of variation (population std / mean).
pub fn coefficient_of_variation<T: Scalar>(w: &[T]) -> f64 {
    let n = w.len() as f64;
    let mean = w.iter().map(|v| v.f64()).sum::<f64>() / n;
    let var = w.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    None,
    Prune,
    Reweight,
}

impl FromStr for WeightingMode {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "prune" => Ok(Self::Prune),
            "reweight" => Ok(Self::Reweight),
            _ => Err(PcdError::InvalidArgument(format!("unknown weighting mode `{s}`"))),
        }
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Prune => "prune",
            Self::Reweight => "reweight",
        })
    }
}
