//! Reference directions on the unit simplex.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Exp1};

use crate::error::{PcdError, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMethod {
    Riesz,
    DasDennis,
}

impl FromStr for DirectionMethod {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "riesz" => Ok(Self::Riesz),
            "das-dennis" | "dasdennis" => Ok(Self::DasDennis),
            _ => Err(PcdError::InvalidArgument(format!("unknown direction method `{s}`"))),
        }
    }
}

impl fmt::Display for DirectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Riesz => "riesz",
            Self::DasDennis => "das-dennis",
        })
    }
}

/// `L × m` matrix of non-negative rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDirections<T> {
    pub w: Array2<T>,
    pub method: DirectionMethod,
}

impl<T: Scalar> ReferenceDirections<T> {
    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    /// Each row rescaled to unit Euclidean norm.
    pub fn unit_rows(&self) -> Array2<T> {
        let mut u = self.w.clone();
        for mut r in u.rows_mut() {
            let n = r.iter().map(|&v| v * v).sum::<T>().sqrt();
            r.mapv_inplace(|v| v / n);
        }
        u
    }

    pub fn to_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..self.m()).map(|j| format!("w{j}")))?;
        for r in self.w.rows() {
            w.write_record(r.iter().map(|v| format!("{v}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Every point `(k_1, …, k_m) / H` with `Σ k_i = H`.
pub fn das_dennis<T: Scalar>(m: usize, h: usize) -> Result<ReferenceDirections<T>> {
    if m < 2 {
        return Err(PcdError::InvalidArgument(format!("das_dennis needs m >= 2, got {m}")));
    }
    if h < 1 {
        return Err(PcdError::InvalidArgument("das_dennis needs H >= 1".into()));
    }
    let count = binomial(h + m - 1, m - 1);
    let mut data = Vec::with_capacity(count * m);
    let mut current = vec![0usize; m];
    compositions(&mut current, 0, h, &mut |c| {
        data.extend(c.iter().map(|&k| T::of_usize(k) / T::of_usize(h)));
    });
    let w = Array2::from_shape_vec((count, m), data).expect("lattice size");
    Ok(ReferenceDirections {
        w,
        method: DirectionMethod::DasDennis,
    })
}

fn compositions(current: &mut [usize], pos: usize, left: usize, emit: &mut impl FnMut(&[usize])) {
    if pos == current.len() - 1 {
        current[pos] = left;
        emit(current);
        return;
    }
    for k in (0..=left).rev() {
        current[pos] = k;
        compositions(current, pos + 1, left - k, emit);
    }
}

/// Das-Dennis lattice with exactly `l` rows: the smallest `H` whose lattice has
/// at least `l` points, thinned by a fixed stride.
pub fn das_dennis_count<T: Scalar>(m: usize, l: usize) -> Result<ReferenceDirections<T>> {
    if l == 0 {
        return Err(PcdError::InvalidArgument("need at least one direction".into()));
    }
    if m < 2 {
        return Err(PcdError::InvalidArgument(format!("das_dennis needs m >= 2, got {m}")));
    }
    let mut h = 1;
    while binomial(h + m - 1, m - 1) < l {
        h += 1;
    }
    let full = das_dennis::<T>(m, h)?;
    let total = full.len();
    let rows: Vec<usize> = (0..l).map(|i| i * total / l).collect();
    Ok(ReferenceDirections {
        w: full.w.select(Axis(0), &rows),
        method: DirectionMethod::DasDennis,
    })
}

/// Optimizer settings for [`riesz_s_energy`].
#[derive(Debug, Clone, Copy)]
pub struct RieszOptions {
    pub iterations: usize,
    pub step: f64,
    pub decay: f64,
}

impl Default for RieszOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            step: 1e-2,
            decay: 0.995,
        }
    }
}

/// Riesz energy `Σ_{i<j} ‖w_i − w_j‖^{−s}` with `s = m²`.
pub fn riesz_energy<T: Scalar>(w: &Array2<T>) -> f64 {
    let s = (w.ncols() * w.ncols()) as f64;
    let mut e = 0.0;
    for i in 0..w.nrows() {
        for j in i + 1..w.nrows() {
            let d2: f64 = w
                .row(i)
                .iter()
                .zip(w.row(j))
                .map(|(a, b)| (a.f64() - b.f64()).powi(2))
                .sum();
            e += d2.powf(-s / 2.0);
        }
    }
    e
}

/// Riesz s-energy directions.
///
/// Corners of the simplex are pinned, the remaining points start at seeded
/// uniform simplex positions and follow projected gradient descent on the
/// energy. A step is only taken when it lowers the energy, so the result never
/// has higher energy than the start.
pub fn riesz_s_energy<T: Scalar>(
    m: usize,
    l: usize,
    seed: u64,
    opts: RieszOptions,
) -> Result<ReferenceDirections<T>> {
    if m < 2 {
        return Err(PcdError::InvalidArgument(format!("riesz_s_energy needs m >= 2, got {m}")));
    }
    if l < 2 {
        return Err(PcdError::InvalidArgument(format!("riesz_s_energy needs L >= 2, got {l}")));
    }
    let mut rng = rng::seeded(seed);
    let pinned = l.min(m);
    let mut w = Array2::<f64>::zeros((l, m));
    for i in 0..pinned {
        w[[i, i]] = 1.0;
    }
    for i in pinned..l {
        let e: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
        let s: f64 = e.iter().sum();
        for j in 0..m {
            w[[i, j]] = e[j] / s;
        }
    }

    let s = (m * m) as f64;
    // Energies reach 1e30 for close points at m = 6; compare in log space.
    let log_energy = |w: &Array2<f64>| riesz_energy(w).ln();
    let mut energy = log_energy(&w);
    let mut step = opts.step;
    let mut grad = Array2::<f64>::zeros((l, m));
    for _ in 0..opts.iterations {
        if l == pinned {
            break;
        }
        grad.fill(0.0);
        for i in pinned..l {
            for j in 0..l {
                if i == j {
                    continue;
                }
                let diff: Vec<f64> = (0..m).map(|k| w[[i, k]] - w[[j, k]]).collect();
                let d2: f64 = diff.iter().map(|v| v * v).sum();
                let coef = -s * d2.powf(-s / 2.0 - 1.0);
                for k in 0..m {
                    grad[[i, k]] += coef * diff[k];
                }
            }
        }
        let gmax = grad
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let mut trial = w.clone();
        for i in pinned..l {
            let mut row: Vec<f64> = (0..m).map(|k| w[[i, k]] - step * grad[[i, k]] / gmax).collect();
            project_to_simplex(&mut row);
            for k in 0..m {
                trial[[i, k]] = row[k];
            }
        }
        let e = log_energy(&trial);
        if e.is_finite() && e < energy {
            w = trial;
            energy = e;
            step *= opts.decay;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }

    Ok(ReferenceDirections {
        w: w.mapv(T::lit),
        method: DirectionMethod::Riesz,
    })
}

/// Euclidean projection onto `{w ≥ 0, Σ w = 1}`.
pub fn project_to_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // restore the exact unit sum lost to rounding
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn generate<T: Scalar>(
    method: DirectionMethod,
    m: usize,
    l: usize,
    seed: u64,
) -> Result<ReferenceDirections<T>> {
    match method {
        DirectionMethod::Riesz => riesz_s_energy(m, l, seed, RieszOptions::default()),
        DirectionMethod::DasDennis => das_dennis_count(m, l),
    }
}
