//! Hypervolume (exact and Monte Carlo) and percentile-filtered evaluation.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{PcdError, Result};
use crate::pareto::{non_dominated_sort, NormalizationStats};
use crate::rng;
use crate::scalar::Scalar;

/// Default reference point coordinate in ideal/nadir space.
pub const DEFAULT_REF_MULTIPLIER: f64 = 1.1;

/// Percentiles reported by [`evaluate_run`].
pub const PERCENTILES: [f64; 3] = [100.0, 75.0, 50.0];

fn check_reference<T: Scalar>(reference: &[T]) -> Result<()> {
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(PcdError::NonFinite("hypervolume reference point".into()));
    }
    Ok(())
}

/// Rows strictly better than the reference in every coordinate. Anything else
/// spans an empty box.
fn effective_points<T: Scalar>(points: ArrayView2<T>, reference: &[T]) -> Result<Vec<Vec<T>>> {
    if points.ncols() != reference.len() && points.nrows() > 0 {
        return Err(PcdError::LengthMismatch {
            expected: reference.len(),
            got: points.ncols(),
        });
    }
    Ok(points
        .rows()
        .into_iter()
        .filter(|r| r.iter().zip(reference).all(|(&v, &rf)| v < rf))
        .map(|r| r.to_vec())
        .collect())
}

fn weakly_dominates<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Drops points weakly dominated by another; of equal points the first stays.
fn nondominated_filter<T: Scalar>(pts: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let n = pts.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        if !keep[i] {
            continue;
        }
        for j in 0..n {
            if i == j || !keep[j] {
                continue;
            }
            if weakly_dominates(&pts[j], &pts[i]) {
                keep[i] = false;
                break;
            }
        }
    }
    pts.into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

fn box_volume<T: Scalar>(p: &[T], reference: &[T]) -> T {
    p.iter()
        .zip(reference)
        .fold(T::one(), |acc, (&v, &r)| acc * (r - v))
}

/// Exact hypervolume of the region weakly dominated by `points` and bounded by
/// `reference`.
///
/// Two objectives use a sort-and-sweep; more use [`hypervolume_wfg`].
pub fn hypervolume_exact<T: Scalar>(points: ArrayView2<T>, reference: &[T]) -> Result<T> {
    check_reference(reference)?;
    match reference.len() {
        0 => Err(PcdError::InvalidArgument("reference point is empty".into())),
        1 => Ok(effective_points(points, reference)?
            .iter()
            .map(|p| reference[0] - p[0])
            .fold(T::zero(), T::max)),
        2 => hypervolume_2d(points, reference),
        _ => hypervolume_wfg(points, reference),
    }
}

/// Two-objective sweep.
pub fn hypervolume_2d<T: Scalar>(points: ArrayView2<T>, reference: &[T]) -> Result<T> {
    check_reference(reference)?;
    if reference.len() != 2 {
        return Err(PcdError::InvalidArgument("hypervolume_2d needs m = 2".into()));
    }
    let mut pts = effective_points(points, reference)?;
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap()
            .then(a[1].partial_cmp(&b[1]).unwrap())
    });
    let mut hv = T::zero();
    let mut floor = reference[1];
    for p in &pts {
        if p[1] < floor {
            hv += (reference[0] - p[0]) * (floor - p[1]);
            floor = p[1];
        }
    }
    Ok(hv)
}

/// Recursive slicing on exclusive contributions (WFG), valid for any `m ≥ 1`.
pub fn hypervolume_wfg<T: Scalar>(points: ArrayView2<T>, reference: &[T]) -> Result<T> {
    check_reference(reference)?;
    let pts = nondominated_filter(effective_points(points, reference)?);
    Ok(wfg(pts, reference))
}

fn wfg<T: Scalar>(mut pts: Vec<Vec<T>>, reference: &[T]) -> T {
    match pts.len() {
        0 => T::zero(),
        1 => box_volume(&pts[0], reference),
        _ => {
            pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            let mut total = T::zero();
            for k in 0..pts.len() {
                total += exclusive(&pts[k], &pts[k + 1..], reference);
            }
            total
        }
    }
}

fn exclusive<T: Scalar>(p: &[T], rest: &[Vec<T>], reference: &[T]) -> T {
    let limited: Vec<Vec<T>> = rest
        .iter()
        .map(|q| q.iter().zip(p).map(|(&a, &b)| a.max(b)).collect())
        .collect();
    box_volume(p, reference) - wfg(nondominated_filter(limited), reference)
}

/// Monte Carlo estimate with its binomial standard error, sampling the box
/// spanned by the componentwise minimum of the set and the reference.
pub fn hypervolume_mc<T: Scalar>(
    points: ArrayView2<T>,
    reference: &[T],
    n_samples: usize,
    seed: u64,
) -> Result<(T, T)> {
    check_reference(reference)?;
    if n_samples < 1000 {
        return Err(PcdError::InvalidArgument(format!(
            "hypervolume_mc needs at least 1000 samples, got {n_samples}"
        )));
    }
    let pts: Vec<Vec<f64>> = effective_points(points, reference)?
        .into_iter()
        .map(|p| p.iter().map(|v| v.f64()).collect())
        .collect();
    if pts.is_empty() {
        return Ok((T::zero(), T::zero()));
    }
    let reference: Vec<f64> = reference.iter().map(|v| v.f64()).collect();
    let m = reference.len();
    let lower: Vec<f64> = (0..m)
        .map(|j| pts.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let volume: f64 = lower.iter().zip(&reference).map(|(l, r)| r - l).product();

    let mut rng = rng::seeded(seed);
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        for j in 0..m {
            sample[j] = lower[j] + rng.random::<f64>() * (reference[j] - lower[j]);
        }
        if pts.iter().any(|p| weakly_dominates(p, &sample)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / n_samples as f64;
    let estimate = volume * frac;
    let std_error = volume * (frac * (1.0 - frac) / n_samples as f64).sqrt();
    Ok((T::lit(estimate), T::lit(std_error)))
}

/// NSGA-II crowding distance of each member of `front` (same order).
/// Boundary members get `+∞`.
pub fn crowding_distance<T: Scalar>(y: ArrayView2<T>, front: &[usize]) -> Vec<f64> {
    let k = front.len();
    let mut dist = vec![0.0f64; k];
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    for j in 0..y.ncols() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            y[[front[a], j]]
                .partial_cmp(&y[[front[b], j]])
                .unwrap()
                .then(front[a].cmp(&front[b]))
        });
        let lo = y[[front[order[0]], j]].f64();
        let hi = y[[front[order[k - 1]], j]].f64();
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..k - 1 {
            let prev = y[[front[order[w - 1]], j]].f64();
            let next = y[[front[order[w + 1]], j]].f64();
            dist[order[w]] += (next - prev) / range;
        }
    }
    dist
}

/// Indices surviving removal of the worst `(100 − P)%`.
///
/// Points are ranked by non-domination rank, then descending crowding
/// distance, then ascending index; the best `⌈Q·P/100⌉` are kept and returned
/// in ascending index order.
pub fn percentile_filter<T: Scalar>(y: ArrayView2<T>, percent: f64) -> Result<Vec<usize>> {
    let q = y.nrows();
    if q == 0 {
        return Err(PcdError::Empty("percentile_filter needs at least one point"));
    }
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(PcdError::InvalidArgument(format!(
            "percentile must lie in (0, 100], got {percent}"
        )));
    }
    if percent == 100.0 {
        return Ok((0..q).collect());
    }
    let keep = ((q as f64) * percent / 100.0).ceil() as usize;
    let order = survival_order(y)?;
    let mut kept: Vec<usize> = order.into_iter().take(keep.clamp(1, q)).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// All indices, best first, under the rank/crowding rule.
pub fn survival_order<T: Scalar>(y: ArrayView2<T>) -> Result<Vec<usize>> {
    let fronts = non_dominated_sort(y)?;
    let mut order = Vec::with_capacity(y.nrows());
    for front in &fronts.fronts {
        let cd = crowding_distance(y, front);
        let mut members: Vec<(usize, f64)> = front.iter().cloned().zip(cd).collect();
        members.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        order.extend(members.into_iter().map(|(i, _)| i));
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvReport {
    pub hv_100: f64,
    pub hv_75: f64,
    pub hv_50: f64,
    pub reference_point: Vec<f64>,
    /// Points kept at P = 100, 75, 50.
    pub n_points: [usize; 3],
}

/// Maps raw objectives into ideal/nadir space.
pub fn normalize_objectives<T: Scalar>(y: ArrayView2<T>, stats: &NormalizationStats<T>) -> Array2<T> {
    let mut out = y.to_owned();
    for mut row in out.rows_mut() {
        let u = stats.to_unit(row.as_slice().expect("standard layout"));
        row.iter_mut().zip(u).for_each(|(a, b)| *a = b);
    }
    out
}

/// Percentile hypervolume of a generated set, in ideal/nadir space with the
/// reference point at `ref_multiplier` in every coordinate.
pub fn evaluate_run<T: Scalar>(
    y_generated: ArrayView2<T>,
    stats: &NormalizationStats<T>,
    ref_multiplier: f64,
) -> Result<HvReport> {
    if y_generated.nrows() == 0 {
        return Err(PcdError::Empty("evaluate_run needs at least one point"));
    }
    if y_generated.ncols() != stats.m() {
        return Err(PcdError::LengthMismatch {
            expected: stats.m(),
            got: y_generated.ncols(),
        });
    }
    let y_norm = normalize_objectives(y_generated, stats);
    let reference = vec![T::lit(ref_multiplier); stats.m()];
    let mut hv = [0.0; 3];
    let mut counts = [0usize; 3];
    for (k, &p) in PERCENTILES.iter().enumerate() {
        let kept = percentile_filter(y_norm.view(), p)?;
        let sub = y_norm.select(ndarray::Axis(0), &kept);
        hv[k] = hypervolume_exact(sub.view(), &reference)?.f64();
        counts[k] = kept.len();
    }
    Ok(HvReport {
        hv_100: hv[0],
        hv_75: hv[1],
        hv_50: hv[2],
        reference_point: vec![ref_multiplier; stats.m()],
        n_points: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_examples() {
        let hv = hypervolume_exact(array![[0.5, 0.5]].view(), &[1.0, 1.0]).unwrap();
        assert_eq!(hv, 0.25);
        let hv: f64 = hypervolume_exact(array![[0.25, 0.75], [0.75, 0.25]].view(), &[1.0, 1.0]).unwrap();
        assert!((hv - 0.3125).abs() < 1e-15);
        let hv = hypervolume_exact(array![[0.0, 0.0, 0.0]].view(), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(hv, 1.0);
    }

    #[test]
    fn dominated_point_changes_nothing() {
        let base = array![[0.25, 0.75, 0.5], [0.75, 0.25, 0.5], [0.5, 0.5, 0.1]];
        let more = array![[0.25, 0.75, 0.5], [0.75, 0.25, 0.5], [0.5, 0.5, 0.1], [0.8, 0.8, 0.8]];
        let r = [1.0, 1.0, 1.0];
        assert_eq!(
            hypervolume_exact(base.view(), &r).unwrap(),
            hypervolume_exact(more.view(), &r).unwrap()
        );
    }

    #[test]
    fn outside_points_and_empty_sets() {
        let r = [1.0, 1.0];
        assert_eq!(hypervolume_exact(array![[1.0, 0.0], [2.0, 2.0]].view(), &r).unwrap(), 0.0);
        let empty = Array2::<f64>::zeros((0, 2));
        assert_eq!(hypervolume_exact(empty.view(), &r).unwrap(), 0.0);
        assert_eq!(hypervolume_mc(empty.view(), &r, 1000, 1).unwrap(), (0.0, 0.0));
        assert!(hypervolume_exact(array![[0.0, 0.0]].view(), &[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn wfg_matches_inclusion_exclusion() {
        let hv: f64 = hypervolume_wfg(array![[0.25, 0.75], [0.75, 0.25]].view(), &[1.0, 1.0]).unwrap();
        assert!((hv - 0.3125).abs() < 1e-15);
        // two boxes in 3-d overlapping on [0.5,1]^2 × [0.5,1]
        let pts = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        let hv: f64 = hypervolume_wfg(pts.view(), &[1.0, 1.0, 1.0]).unwrap();
        assert!((hv - (0.25 + 0.25 - 0.125)).abs() < 1e-15);
    }

    #[test]
    fn mc_converges_on_single_box() {
        let (est, se) = hypervolume_mc(array![[0.5, 0.5]].view(), &[1.0, 1.0], 1_000_000, 3).unwrap();
        // bounding box is the box itself, so every sample hits
        assert_eq!(est, 0.25);
        assert_eq!(se, 0.0);
        let (est, se): (f64, f64) =
            hypervolume_mc(array![[0.5, 0.5], [0.0, 0.9]].view(), &[1.0, 1.0], 1_000_000, 3).unwrap();
        assert!((est - 0.3).abs() < 3.0 * se, "{est} ± {se}");
        assert!(hypervolume_mc(array![[0.5, 0.5]].view(), &[1.0, 1.0], 10, 3).is_err());
    }

    #[test]
    fn percentile_examples() {
        let y = array![[0.0, 0.0], [1.0, 1.0], [0.0, 2.0], [2.0, 0.0]];
        assert_eq!(percentile_filter(y.view(), 100.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(percentile_filter(y.view(), 50.0).unwrap(), vec![0, 2]);
        assert_eq!(percentile_filter(array![[1.0, 2.0]].view(), 50.0).unwrap(), vec![0]);
        assert!(percentile_filter(y.view(), 0.0).is_err());
        assert!(percentile_filter(y.view(), 120.0).is_err());
        assert_eq!(percentile_filter(y.view(), 10.0).unwrap(), vec![0]);
    }

    fn unit_stats() -> NormalizationStats<f64> {
        NormalizationStats {
            ideal: vec![0.0, 0.0],
            nadir: vec![1.0, 1.0],
            y_mean: vec![0.5, 0.5],
            y_std: vec![1.0, 1.0],
            lower_bounds: vec![0.0],
            upper_bounds: vec![1.0],
        }
    }

    #[test]
    fn evaluate_run_at_nadir() {
        let y = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let r = evaluate_run(y.view(), &unit_stats(), 1.1).unwrap();
        assert!((r.hv_100 - 0.01).abs() < 1e-12);
        assert!(r.hv_50 <= r.hv_75 && r.hv_75 <= r.hv_100);
        assert_eq!(r.n_points, [3, 3, 2]);
        assert_eq!(r.reference_point, vec![1.1, 1.1]);
    }

    #[test]
    fn evaluate_run_rewards_points_beyond_ideal() {
        let inside = evaluate_run(array![[0.0, 1.0], [1.0, 0.0]].view(), &unit_stats(), 1.1).unwrap();
        let beyond =
            evaluate_run(array![[-0.2, 1.0], [1.0, 0.0]].view(), &unit_stats(), 1.1).unwrap();
        assert!(beyond.hv_100 > inside.hv_100);
    }
}
