//! Pareto dominance, non-dominated sorting and objective-space geometry.
//!
//! All objectives are minimized. Objective sets are `N × m` matrices, one row
//! per point.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::OfflineDataset;
use crate::error::{PcdError, Result};
use crate::scalar::Scalar;

/// `a` Pareto-dominates `b`: no worse anywhere, strictly better somewhere.
pub fn dominates<T: Scalar>(a: &[T], b: &[T]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(PcdError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dominates_view(a.iter(), b.iter()))
}

#[inline]
pub(crate) fn dominates_view<'a, T: Scalar>(
    a: impl Iterator<Item = &'a T>,
    b: impl Iterator<Item = &'a T>,
) -> bool {
    let mut strict = false;
    for (x, y) in a.zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

#[inline]
fn row_dominates<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> bool {
    dominates_view(a.iter(), b.iter())
}

/// Fronts `F_1, F_2, …` of a point set, each listing point indices in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontPartition {
    pub fronts: Vec<Vec<usize>>,
    pub rank_of: Vec<usize>,
}

impl FrontPartition {
    pub fn len(&self) -> usize {
        self.rank_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_of.is_empty()
    }

    pub fn first(&self) -> &[usize] {
        &self.fronts[0]
    }
}

fn check_finite<T: Scalar>(y: &ArrayView2<T>) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PcdError::NonFinite("objective matrix".into()));
    }
    Ok(())
}

/// Non-dominated sorting.
///
/// Points are visited in lexicographic order, so a point can only be dominated
/// by points already placed; each one goes to the first front that holds no
/// dominator of it. Memory stays O(N), which matters at N = 60 000.
pub fn non_dominated_sort<T: Scalar>(y: ArrayView2<T>) -> Result<FrontPartition> {
    let n = y.nrows();
    if n == 0 {
        return Err(PcdError::Empty("non_dominated_sort needs at least one point"));
    }
    check_finite(&y)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for (u, v) in y.row(a).iter().zip(y.row(b).iter()) {
            match u.partial_cmp(v).expect("finite") {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(&b)
    });

    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut rank_of = vec![0usize; n];
    for &p in &order {
        let row = y.row(p);
        // Fronts are nested: if F_k holds no dominator, no later front does
        // either, but an earlier one still might. Linear scan from the top.
        let mut k = 0;
        while k < fronts.len() {
            // Later members of a front are more likely to dominate p.
            let dominated = fronts[k]
                .iter()
                .rev()
                .any(|&q| row_dominates(y.row(q), row));
            if !dominated {
                break;
            }
            k += 1;
        }
        if k == fronts.len() {
            fronts.push(Vec::new());
        }
        fronts[k].push(p);
        rank_of[p] = k;
    }
    for f in &mut fronts {
        f.sort_unstable();
    }
    Ok(FrontPartition { fronts, rank_of })
}

/// Dominance counts `o(i) = |{j ≠ i : y_j ≺ y_i}|` and their `N − 1`
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceStats<T> {
    pub counts: Vec<usize>,
    pub normalized: Vec<T>,
}

impl<T: Scalar> DominanceStats<T> {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let n = counts.len();
        let normalized = if n > 1 {
            let denom = T::of_usize(n - 1);
            counts.iter().map(|&c| T::of_usize(c) / denom).collect()
        } else {
            vec![T::zero(); n]
        };
        Self { counts, normalized }
    }
}

/// Definitional O(N²m) dominance count, parallel over rows.
pub fn dominance_numbers<T: Scalar>(y: ArrayView2<T>) -> Result<DominanceStats<T>> {
    let n = y.nrows();
    if n == 0 {
        return Err(PcdError::Empty("dominance_numbers needs at least one point"));
    }
    check_finite(&y)?;
    let counts: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            (0..n)
                .filter(|&j| j != i && row_dominates(y.row(j), yi))
                .count()
        })
        .collect();
    Ok(DominanceStats::from_counts(counts))
}

/// Objective and decision-space statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats<T> {
    /// Componentwise minimum of all objectives.
    pub ideal: Vec<T>,
    /// Componentwise maximum over the non-dominated subset.
    pub nadir: Vec<T>,
    pub y_mean: Vec<T>,
    pub y_std: Vec<T>,
    pub lower_bounds: Vec<T>,
    pub upper_bounds: Vec<T>,
}

/// Added to a nadir coordinate that coincides with the ideal.
pub const NADIR_EPS: f64 = 1e-9;

pub fn compute_normalization(dataset: &OfflineDataset) -> Result<NormalizationStats<f64>> {
    let y = dataset.y.view();
    let n = y.nrows();
    if n < 2 {
        return Err(PcdError::InvalidArgument(format!(
            "normalization needs at least 2 points, got {n}"
        )));
    }
    let m = y.ncols();
    let fronts = non_dominated_sort(y)?;

    let ideal: Vec<f64> = (0..m)
        .map(|j| y.column(j).iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let mut nadir: Vec<f64> = (0..m)
        .map(|j| {
            fronts
                .first()
                .iter()
                .map(|&i| y[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    for (nd, id) in nadir.iter_mut().zip(&ideal) {
        if *nd <= *id {
            *nd = *id + NADIR_EPS;
        }
    }

    let y_mean: Vec<f64> = y.mean_axis(Axis(0)).expect("n > 0").to_vec();
    let y_std: Vec<f64> = y
        .std_axis(Axis(0), 1.0)
        .iter()
        .map(|&s| if s > 0.0 && s.is_finite() { s } else { 1.0 })
        .collect();

    Ok(NormalizationStats {
        ideal,
        nadir,
        y_mean,
        y_std,
        lower_bounds: dataset.lower_bounds.clone(),
        upper_bounds: dataset.upper_bounds.clone(),
    })
}

impl<T: Scalar> NormalizationStats<T> {
    pub fn m(&self) -> usize {
        self.ideal.len()
    }

    pub fn d(&self) -> usize {
        self.lower_bounds.len()
    }

    pub fn cast<U: Scalar>(&self) -> NormalizationStats<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.f64())).collect::<Vec<U>>();
        NormalizationStats {
            ideal: c(&self.ideal),
            nadir: c(&self.nadir),
            y_mean: c(&self.y_mean),
            y_std: c(&self.y_std),
            lower_bounds: c(&self.lower_bounds),
            upper_bounds: c(&self.upper_bounds),
        }
    }

    /// Raw objectives to ideal/nadir space (ideal at the origin, nadir at 1).
    pub fn to_unit(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.ideal.iter().zip(&self.nadir))
            .map(|(&v, (&lo, &hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn from_unit(&self, u: &[T]) -> Vec<T> {
        u.iter()
            .zip(self.ideal.iter().zip(&self.nadir))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Raw objectives to z-scores.
    pub fn to_z(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.y_mean.iter().zip(&self.y_std))
            .map(|(&v, (&mu, &sd))| (v - mu) / sd)
            .collect()
    }

    /// Ideal/nadir coordinates straight to the z-scores the denoiser is
    /// conditioned on.
    pub fn unit_to_z(&self, u: &[T]) -> Vec<T> {
        self.to_z(&self.from_unit(u))
    }

    /// Decision vector to `[-1, 1]` per coordinate.
    pub fn encode_x(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        x.iter()
            .zip(self.lower_bounds.iter().zip(&self.upper_bounds))
            .map(|(&v, (&lo, &hi))| two * (v - lo) / (hi - lo) - T::one())
            .collect()
    }

    /// Inverse of [`encode_x`](Self::encode_x), clipped to the box.
    pub fn decode_x(&self, s: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        s.iter()
            .zip(self.lower_bounds.iter().zip(&self.upper_bounds))
            .map(|(&v, (&lo, &hi))| (lo + (v + T::one()) * half * (hi - lo)).max(lo).min(hi))
            .collect()
    }
}

/// Distance from `p` to the line spanned by the unit vector `w`.
pub fn perpendicular_distance<T: Scalar>(p: &[T], w: &[T]) -> Result<T> {
    if p.len() != w.len() {
        return Err(PcdError::LengthMismatch {
            expected: w.len(),
            got: p.len(),
        });
    }
    let norm = w.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm == T::zero() {
        return Err(PcdError::ZeroDirection);
    }
    if (norm - T::one()).abs() > T::unit_tol() {
        return Err(PcdError::InvalidArgument(format!(
            "direction must have unit norm, got {norm}"
        )));
    }
    Ok(perp_unchecked(p, w))
}

#[inline]
pub(crate) fn perp_unchecked<T: Scalar>(p: &[T], w: &[T]) -> T {
    let t: T = p.iter().zip(w).map(|(&a, &b)| a * b).sum();
    p.iter()
        .zip(w)
        .map(|(&a, &b)| {
            let r = a - t * b;
            r * r
        })
        .sum::<T>()
        .sqrt()
}

/// `w / ‖w‖₂`.
pub fn unit<T: Scalar>(w: &[T]) -> Result<Vec<T>> {
    let norm = w.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm == T::zero() || !norm.is_finite() {
        return Err(PcdError::ZeroDirection);
    }
    Ok(w.iter().map(|&v| v / norm).collect())
}
