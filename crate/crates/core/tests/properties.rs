use ndarray::Array2;
use proptest::prelude::*;

use pcd_core::conditioning::{assign_points, extrapolate};
use pcd_core::diffusion::{cosine_lr, ema_update};
use pcd_core::indicators::{hypervolume_2d, hypervolume_exact, hypervolume_wfg, percentile_filter};
use pcd_core::pareto::{dominance_numbers, dominates, non_dominated_sort, DominanceStats};
use pcd_core::refdirs::{DirectionMethod, ReferenceDirections};
use pcd_core::reweighting::{build_grid, cell_weight, coefficient_of_variation, compute_weights, prune_weights};

fn matrix(max_n: usize, m: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop::collection::vec(0u8..8, m), 1..=max_n).prop_map(move |rows| {
        Array2::from_shape_fn((rows.len(), m), |(i, k)| rows[i][k] as f64 / 7.0)
    })
}

fn objectives() -> impl Strategy<Value = Array2<f64>> {
    (2usize..=4).prop_flat_map(|m| matrix(60, m))
}

fn row(y: &Array2<f64>, i: usize) -> Vec<f64> {
    y.row(i).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fronts_partition_and_layer(y in objectives()) {
        let p = non_dominated_sort(y.view()).unwrap();
        let mut seen: Vec<usize> = p.fronts.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..y.nrows()).collect::<Vec<_>>());
        for (k, f) in p.fronts.iter().enumerate() {
            prop_assert!(!f.is_empty());
            for &i in f {
                prop_assert_eq!(p.rank_of[i], k);
                for &j in f {
                    prop_assert!(!dominates(&row(&y, j), &row(&y, i)).unwrap());
                }
                if k > 0 {
                    let covered = p.fronts[k - 1].iter().any(|&j| dominates(&row(&y, j), &row(&y, i)).unwrap());
                    prop_assert!(covered, "point {} in front {} has no dominator in the previous front", i, k);
                }
            }
        }
    }

    #[test]
    fn dominance_counts_agree_with_fronts(y in objectives()) {
        let p = non_dominated_sort(y.view()).unwrap();
        let d = dominance_numbers::<f64>(y.view()).unwrap();
        for i in 0..y.nrows() {
            prop_assert_eq!(d.counts[i] == 0, p.rank_of[i] == 0);
            prop_assert!(d.normalized[i] >= 0.0 && d.normalized[i] <= 1.0);
            // Everything dominating a dominator also dominates the point.
            for j in 0..y.nrows() {
                if dominates(&row(&y, j), &row(&y, i)).unwrap() {
                    prop_assert!(d.counts[j] < d.counts[i]);
                }
            }
        }
    }

    #[test]
    fn hypervolume_bounded_and_monotone(y in matrix(25, 3), extra in prop::collection::vec(0u8..8, 3)) {
        let r = [1.1, 1.1, 1.1];
        let hv: f64 = hypervolume_exact(y.view(), &r).unwrap();
        prop_assert!(hv >= 0.0 && hv <= 1.1f64.powi(3) + 1e-12);
        let mut bigger = y.clone();
        bigger.push_row(ndarray::ArrayView1::from(&extra.iter().map(|&v| v as f64 / 7.0).collect::<Vec<_>>())).unwrap();
        let hv2: f64 = hypervolume_exact(bigger.view(), &r).unwrap();
        prop_assert!(hv2 >= hv - 1e-12);
        // Dominated points add nothing.
        let keep = non_dominated_sort(y.view()).unwrap().first().to_vec();
        let front = y.select(ndarray::Axis(0), &keep);
        let hv_front: f64 = hypervolume_exact(front.view(), &r).unwrap();
        prop_assert!((hv_front - hv).abs() <= 1e-12);
    }

    #[test]
    fn two_objective_paths_agree(y in matrix(40, 2)) {
        let a: f64 = hypervolume_2d(y.view(), &[1.0, 1.0]).unwrap();
        let b: f64 = hypervolume_wfg(y.view(), &[1.0, 1.0]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn percentile_filter_is_nested(y in objectives()) {
        let all = percentile_filter(y.view(), 100.0).unwrap();
        let p75 = percentile_filter(y.view(), 75.0).unwrap();
        let p50 = percentile_filter(y.view(), 50.0).unwrap();
        prop_assert_eq!(all.len(), y.nrows());
        prop_assert!(p50.iter().all(|i| p75.contains(i)));
        prop_assert!(p75.iter().all(|i| all.contains(i)));
    }

    #[test]
    fn weights_have_unit_mean(y in objectives(), bins in 1usize..6, k in 0.5f64..30.0, tau in 0.01f64..2.0) {
        let grid = build_grid(y.view(), bins).unwrap();
        let dom = dominance_numbers::<f64>(y.view()).unwrap();
        let w = compute_weights(y.view(), &grid, &dom, k, tau).unwrap();
        let total: f64 = w.w.iter().sum();
        prop_assert!((total - y.nrows() as f64).abs() <= 1e-9);
        prop_assert!(w.w.iter().all(|&v| v > 0.0));
        // Same cell, same weight.
        let cells = grid.assign(y.view());
        for members in cells.values() {
            prop_assert!(members.iter().all(|&i| w.w[i] == w.w[members[0]]));
        }
    }

    #[test]
    fn cell_weight_monotone(size in 1usize..500, dom in 0.0f64..0.5, step in 0.001f64..0.5, k in 0.5f64..50.0, tau in 0.02f64..1.0) {
        let base: f64 = cell_weight(size, dom, k, tau);
        prop_assert!(cell_weight(size, dom + step, k, tau) < base);
        prop_assert!(cell_weight(size + 1, dom, k, tau) > base);
    }

    #[test]
    fn temperature_softens_equal_cells(cells in 2usize..6, per in 1usize..20, doms in prop::collection::vec(0.0f64..1.0, 6), tau in 0.05f64..1.0) {
        prop_assume!(doms[..cells].iter().any(|&d| (d - doms[0]).abs() > 1e-3));
        let n = cells * per;
        let y = Array2::from_shape_fn((n, 1), |(i, _)| (i / per) as f64);
        let grid = build_grid(y.view(), cells).unwrap();
        let dom = DominanceStats {
            counts: vec![0; n],
            normalized: (0..n).map(|i| doms[i / per]).collect(),
        };
        let lo = compute_weights(y.view(), &grid, &dom, 10.0, tau).unwrap();
        let hi = compute_weights(y.view(), &grid, &dom, 10.0, tau * 1.5).unwrap();
        prop_assert!(coefficient_of_variation(&hi.w) < coefficient_of_variation(&lo.w));
    }

    #[test]
    fn pruning_keeps_a_rank_prefix(y in objectives(), fraction in 0.05f64..1.0) {
        let p = non_dominated_sort(y.view()).unwrap();
        let w: Vec<f64> = prune_weights(&p, fraction).unwrap();
        let kept: Vec<usize> = (0..y.nrows()).filter(|&i| w[i] > 0.0).collect();
        prop_assert!(!kept.is_empty());
        let worst_kept = kept.iter().map(|&i| p.rank_of[i]).max().unwrap();
        for i in 0..y.nrows() {
            prop_assert_eq!(w[i] > 0.0, p.rank_of[i] <= worst_kept);
        }
    }

    #[test]
    fn niche_counts_balance(
        (m, l, c) in (2usize..=4, 1usize..=6, 1usize..=4),
        extra in 0usize..10,
        seed_rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 40),
        dir_rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 6),
    ) {
        let j = c * l;
        let n = j + extra;
        let y = Array2::from_shape_fn((n, m), |(i, k)| {
            let r = &seed_rows[i % 40][..m];
            r[k] / r.iter().sum::<f64>() + (i / 40) as f64
        });
        let w = Array2::from_shape_fn((l, m), |(i, k)| dir_rows[i][k] / dir_rows[i][..m].iter().sum::<f64>());
        let dirs = ReferenceDirections { w, method: DirectionMethod::DasDennis };
        let fronts = non_dominated_sort(y.view()).unwrap();
        prop_assume!(fronts.first().len() >= j);
        let a = assign_points(&fronts, y.view(), &dirs, j).unwrap();
        prop_assert_eq!(a.pairs.len(), j);
        let spread = a.niche_counts.iter().max().unwrap() - a.niche_counts.iter().min().unwrap();
        prop_assert!(spread <= 1, "{:?}", a.niche_counts);
    }

    #[test]
    fn selection_walks_fronts_in_order(y in objectives(), l in 1usize..5, j_frac in 0.0f64..1.0) {
        let m = y.ncols();
        let j = 1 + ((y.nrows() - 1) as f64 * j_frac) as usize;
        let dirs = ReferenceDirections {
            w: Array2::from_shape_fn((l, m), |(i, k)| if k == i % m { 0.7 } else { 0.3 / (m - 1) as f64 }),
            method: DirectionMethod::DasDennis,
        };
        let fronts = non_dominated_sort(y.view()).unwrap();
        let a = assign_points(&fronts, y.view(), &dirs, j).unwrap();
        prop_assert_eq!(a.pairs.len(), j);
        prop_assert_eq!(a.niche_counts.iter().sum::<usize>(), j);
        let ranks: Vec<usize> = a.pairs.iter().map(|&(i, _)| fronts.rank_of[i]).collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn extrapolation_moves_toward_the_ideal(
        y in prop::collection::vec(0.0f64..1.5, 3),
        w in prop::collection::vec(0.01f64..1.0, 3),
        d1 in 0.0f64..1.0,
        d2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let near: Vec<f64> = extrapolate(&y, &w, lo).unwrap();
        let far: Vec<f64> = extrapolate(&y, &w, hi).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(norm(&far) <= norm(&near) + 1e-12);
        // Result lies on the ray through w.
        let wn = norm(&w);
        let t = norm(&near);
        for k in 0..3 {
            prop_assert!((near[k] - t * w[k] / wn).abs() <= 1e-12);
        }
    }

    #[test]
    fn ema_is_a_convex_combination(a in prop::collection::vec(-5.0f64..5.0, 1..40), shift in -3.0f64..3.0, decay in 0.0f64..1.0) {
        let p: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let mut s = a.clone();
        ema_update(&mut s, &p, decay);
        for k in 0..a.len() {
            let (lo, hi) = if a[k] <= p[k] { (a[k], p[k]) } else { (p[k], a[k]) };
            prop_assert!(s[k] >= lo - 1e-12 && s[k] <= hi + 1e-12);
        }
    }

    #[test]
    fn cosine_schedule_decays(lr0 in 1e-5f64..1e-2, max in 1usize..5000) {
        prop_assert_eq!(cosine_lr(lr0, 0, max), lr0);
        let mut prev = lr0;
        for step in 1..=max.min(200) {
            let lr = cosine_lr(lr0, step * max / max.min(200), max);
            prop_assert!(lr <= prev + 1e-18 && lr >= 0.0);
            prev = lr;
        }
    }
}
