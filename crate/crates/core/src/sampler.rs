//! EDM sampling with classifier-free guidance.
//!
//! Heun's method integrates `dx/dσ = (x − D̃(x; σ))/σ` down the schedule, where
//! `D̃ = γ·D(x; ŷ, σ) + (1 − γ)·D(x; σ)`. In stochastic mode each step first
//! raises the noise level by a churn factor and adds matching fresh noise.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PcdError, Result};
use crate::pareto::NormalizationStats;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// Anything that maps a noisy batch at a shared noise level to a clean one.
pub trait Denoiser<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    /// `cond = None` is the unconditional branch.
    fn denoise_batch(&self, x: ArrayView2<T>, sigma: T, cond: Option<ArrayView2<T>>) -> Result<Array2<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    Stochastic,
    Deterministic,
}

impl FromStr for SamplerMode {
    type Err = PcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" | "sde" => Ok(Self::Stochastic),
            "deterministic" | "ode" => Ok(Self::Deterministic),
            _ => Err(PcdError::InvalidArgument(format!("unknown sampler mode `{s}`"))),
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stochastic => "stochastic",
            Self::Deterministic => "deterministic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub s_churn: f64,
    pub s_tmin: f64,
    pub s_tmax: f64,
    pub s_noise: f64,
    pub guidance_scale: f64,
    pub mode: SamplerMode,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 128,
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            s_churn: 80.0,
            s_tmin: 0.05,
            s_tmax: 50.0,
            s_noise: 1.003,
            guidance_scale: 2.5,
            mode: SamplerMode::Stochastic,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(PcdError::InvalidArgument(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.steps < 2 {
            return Err(PcdError::InvalidArgument(format!("need at least 2 steps, got {}", self.steps)));
        }
        if !(self.guidance_scale >= 0.0) || !(self.rho > 0.0) || self.s_churn < 0.0 {
            return Err(PcdError::InvalidArgument(
                "guidance scale and churn must be >= 0, rho > 0".into(),
            ));
        }
        Ok(())
    }

    /// Churn factor for a step at noise level `sigma`.
    pub fn churn(&self, sigma: f64) -> f64 {
        if self.mode == SamplerMode::Deterministic || sigma < self.s_tmin || sigma > self.s_tmax {
            0.0
        } else {
            (self.s_churn / self.steps as f64).min(std::f64::consts::SQRT_2 - 1.0)
        }
    }
}

/// `S + 1` noise levels from `σ_max` to `σ_min`, then 0.
pub fn sigma_schedule(cfg: &SamplerConfig) -> Vec<f64> {
    let inv = 1.0 / cfg.rho;
    let (a, b) = (cfg.sigma_max.powf(inv), cfg.sigma_min.powf(inv));
    let last = (cfg.steps - 1) as f64;
    let mut s: Vec<f64> = (0..cfg.steps)
        .map(|i| (a + i as f64 / last * (b - a)).powf(cfg.rho))
        .collect();
    s[0] = cfg.sigma_max;
    s[cfg.steps - 1] = cfg.sigma_min;
    s.push(0.0);
    s
}

/// `γ·D(x; ŷ) + (1 − γ)·D(x)`. With `γ = 1` or `γ = 0` only one branch runs,
/// so the result is exactly that branch's output.
pub fn cfg_denoise<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    x: ArrayView2<T>,
    sigma: T,
    cond: ArrayView2<T>,
    gamma: f64,
) -> Result<Array2<T>> {
    if gamma == 1.0 {
        return model.denoise_batch(x, sigma, Some(cond));
    }
    if gamma == 0.0 {
        return model.denoise_batch(x, sigma, None);
    }
    let c = model.denoise_batch(x, sigma, Some(cond))?;
    let mut u = model.denoise_batch(x, sigma, None)?;
    let (g, h) = (T::lit(gamma), T::one() - T::lit(gamma));
    Zip::from(&mut u).and(&c).for_each(|u, &c| *u = g * c + h * *u);
    Ok(u)
}

fn check_finite<T: Scalar>(x: &Array2<T>, step: usize, sigma: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PcdError::SamplerNonFinite { step, sigma })
    }
}

fn fill_normal<T: Scalar>(row: &mut [T], r: &mut Rng, scale: f64) {
    for v in row {
        let z: f64 = StandardNormal.sample(r);
        *v = T::lit(scale * z);
    }
}

/// Runs the reverse process from `x_init` (already at `σ_max`). Row `i` draws
/// its churn noise from `rngs[i]`. Returns samples in model space.
pub fn integrate<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    x_init: Array2<T>,
    cond: ArrayView2<T>,
    cfg: &SamplerConfig,
    rngs: &mut [Rng],
) -> Result<Array2<T>> {
    cfg.validate()?;
    if x_init.nrows() != rngs.len() || cond.nrows() != x_init.nrows() {
        return Err(PcdError::Shape("x, conditions and RNG streams must have equal length".into()));
    }
    if x_init.ncols() != model.dim() || cond.ncols() != model.cond_dim() {
        return Err(PcdError::Shape(format!(
            "sampler got d = {}, m = {}, model expects d = {}, m = {}",
            x_init.ncols(),
            cond.ncols(),
            model.dim(),
            model.cond_dim()
        )));
    }
    let sigmas = sigma_schedule(cfg);
    let mut x = x_init;
    for i in 0..cfg.steps {
        let (s_cur, s_next) = (sigmas[i], sigmas[i + 1]);
        let gamma_i = cfg.churn(s_cur);
        let s_hat = s_cur * (1.0 + gamma_i);
        if gamma_i > 0.0 {
            let scale = (s_hat * s_hat - s_cur * s_cur).sqrt() * cfg.s_noise;
            let mut eps = vec![T::zero(); x.ncols()];
            for (mut row, r) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
                fill_normal(&mut eps, r, scale);
                row.iter_mut().zip(&eps).for_each(|(v, e)| *v += *e);
            }
        }
        let (th, tn) = (T::lit(s_hat), T::lit(s_next));
        let den = cfg_denoise(model, x.view(), th, cond, cfg.guidance_scale)?;
        let slope = (&x - &den) / th;
        let dt = tn - th;
        let mut x_next = &x + &(&slope * dt);
        if s_next > 0.0 {
            let den2 = cfg_denoise(model, x_next.view(), tn, cond, cfg.guidance_scale)?;
            let slope2 = (&x_next - &den2) / tn;
            let half = T::lit(0.5) * dt;
            x_next = &x + &((&slope + &slope2) * half);
        }
        check_finite(&x_next, i, s_next)?;
        x = x_next;
    }
    Ok(x)
}

/// Initial state `x₀ ~ N(0, σ_max²·I)` for one stream.
pub fn initial_state<T: Scalar>(d: usize, cfg: &SamplerConfig, r: &mut Rng) -> Vec<T> {
    let mut v = vec![T::zero(); d];
    fill_normal(&mut v, r, cfg.sigma_max);
    v
}

/// RNG stream of target `index`.
pub fn target_stream(seed: u64, index: usize) -> Rng {
    rng::stream(seed, index as u64)
}

/// One decoded sample for a single target in ideal/nadir space.
pub fn sample_one<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    stats: &NormalizationStats<T>,
    target: &[T],
    cfg: &SamplerConfig,
    r: &mut Rng,
) -> Result<Vec<T>> {
    let d = model.dim();
    let x0 = Array2::from_shape_vec((1, d), initial_state(d, cfg, r)).expect("d entries");
    if target.len() != stats.m() {
        return Err(PcdError::LengthMismatch { expected: stats.m(), got: target.len() });
    }
    let z = stats.unit_to_z(target);
    let cond = Array2::from_shape_vec((1, z.len()), z).expect("m entries");
    let out = integrate(model, x0, cond.view(), cfg, std::slice::from_mut(r))?;
    Ok(stats.decode_x(&out.row(0).to_vec()))
}

/// One decoded sample per target row. `targets` are in ideal/nadir space;
/// row `i` uses the stream `(cfg.seed, i)`, so results do not depend on how
/// the batch is ordered or split.
pub fn sample_batch<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    stats: &NormalizationStats<T>,
    targets: ArrayView2<T>,
    cfg: &SamplerConfig,
) -> Result<Array2<T>> {
    let ids: Vec<usize> = (0..targets.nrows()).collect();
    sample_with_ids(model, stats, targets, &ids, cfg)
}

/// As [`sample_batch`], with explicit stream ids per row.
pub fn sample_with_ids<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    stats: &NormalizationStats<T>,
    targets: ArrayView2<T>,
    ids: &[usize],
    cfg: &SamplerConfig,
) -> Result<Array2<T>> {
    cfg.validate()?;
    let (q, d) = (targets.nrows(), model.dim());
    if ids.len() != q {
        return Err(PcdError::LengthMismatch { expected: q, got: ids.len() });
    }
    if targets.ncols() != stats.m() || d != stats.d() {
        return Err(PcdError::Shape("targets or model disagree with normalization stats".into()));
    }
    let mut cond = Array2::zeros(targets.dim());
    for (i, row) in targets.rows().into_iter().enumerate() {
        let z = stats.unit_to_z(&row.to_vec());
        cond.row_mut(i).iter_mut().zip(z).for_each(|(a, b)| *a = b);
    }
    let mut rngs: Vec<Rng> = ids.iter().map(|&i| target_stream(cfg.seed, i)).collect();
    let mut x0 = Array2::zeros((q, d));
    for (mut row, r) in x0.rows_mut().into_iter().zip(rngs.iter_mut()) {
        let v = initial_state::<T>(d, cfg, r);
        row.iter_mut().zip(v).for_each(|(a, b)| *a = b);
    }
    let raw = integrate(model, x0, cond.view(), cfg, &mut rngs)?;
    let mut out = Array2::zeros((q, d));
    for (i, row) in raw.rows().into_iter().enumerate() {
        let x = stats.decode_x(&row.to_vec());
        out.row_mut(i).iter_mut().zip(x).for_each(|(a, b)| *a = b);
    }
    Ok(out)
}

/// Ideal denoiser for data `x ~ N(0, s²·I)`: `D(x; σ) = x·s²/(σ² + s²)`,
/// ignoring the condition. Useful as a closed-form oracle.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDenoiser {
    pub d: usize,
    pub m: usize,
    pub data_std: f64,
}

impl<T: Scalar> Denoiser<T> for GaussianDenoiser {
    fn dim(&self) -> usize {
        self.d
    }

    fn cond_dim(&self) -> usize {
        self.m
    }

    fn denoise_batch(&self, x: ArrayView2<T>, sigma: T, _cond: Option<ArrayView2<T>>) -> Result<Array2<T>> {
        let s2 = T::lit(self.data_std * self.data_std);
        let k = s2 / (sigma * sigma + s2);
        Ok(x.mapv(|v| v * k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_order() {
        let cfg = SamplerConfig::default();
        let s = sigma_schedule(&cfg);
        assert_eq!(s.len(), cfg.steps + 1);
        assert_eq!(s[0], 80.0);
        assert_eq!(s[cfg.steps - 1], 0.002);
        assert_eq!(s[cfg.steps], 0.0);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
        let two = sigma_schedule(&SamplerConfig { steps: 2, ..Default::default() });
        assert_eq!(two, vec![80.0, 0.002, 0.0]);
    }

    #[test]
    fn churn_window() {
        let cfg = SamplerConfig { steps: 100, ..Default::default() };
        assert_eq!(cfg.churn(60.0), 0.0);
        assert_eq!(cfg.churn(0.01), 0.0);
        assert!((cfg.churn(1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let det = SamplerConfig { mode: SamplerMode::Deterministic, ..cfg };
        assert_eq!(det.churn(1.0), 0.0);
    }

    struct Affine;

    impl Denoiser<f64> for Affine {
        fn dim(&self) -> usize {
            2
        }
        fn cond_dim(&self) -> usize {
            1
        }
        fn denoise_batch(&self, x: ArrayView2<f64>, _s: f64, cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
            Ok(match cond {
                Some(c) => x.mapv(|v| v + 1.0) + &c,
                None => x.mapv(|v| v * 0.5),
            })
        }
    }

    #[test]
    fn guidance_algebra() {
        let x = ndarray::array![[0.3, -0.7]];
        let c = ndarray::array![[0.25]];
        let cond = Affine.denoise_batch(x.view(), 1.0, Some(c.view())).unwrap();
        let unc = Affine.denoise_batch(x.view(), 1.0, None).unwrap();
        assert_eq!(cfg_denoise(&Affine, x.view(), 1.0, c.view(), 1.0).unwrap(), cond);
        assert_eq!(cfg_denoise(&Affine, x.view(), 1.0, c.view(), 0.0).unwrap(), unc);
        let mix = cfg_denoise(&Affine, x.view(), 1.0, c.view(), 2.5).unwrap();
        for j in 0..2 {
            assert!((mix[[0, j]] - (2.5 * cond[[0, j]] - 1.5 * unc[[0, j]])).abs() < 1e-15);
        }
    }

    fn gaussian_variance(mode: SamplerMode) -> f64 {
        let g = GaussianDenoiser { d: 1, m: 1, data_std: 1.0 };
        let cfg = SamplerConfig { steps: 64, mode, seed: 4, ..Default::default() };
        let n = 4000;
        let mut rngs: Vec<Rng> = (0..n).map(|i| target_stream(cfg.seed, i)).collect();
        let x0 = Array2::from_shape_fn((n, 1), |(i, _)| initial_state::<f64>(1, &cfg, &mut rngs[i])[0]);
        let cond = Array2::zeros((n, 1));
        let out = integrate(&g, x0, cond.view(), &cfg, &mut rngs).unwrap();
        out.iter().map(|v| v * v).sum::<f64>() / n as f64
    }

    #[test]
    fn gaussian_oracle_variance() {
        for mode in [SamplerMode::Deterministic, SamplerMode::Stochastic] {
            let v = gaussian_variance(mode);
            assert!((v - 1.0).abs() < 0.1, "{mode}: {v}");
        }
    }

    #[test]
    fn churn_free_stochastic_equals_deterministic() {
        let cfg = SamplerConfig { steps: 16, s_churn: 0.0, guidance_scale: 2.0, ..Default::default() };
        let det = SamplerConfig { mode: SamplerMode::Deterministic, ..cfg.clone() };
        let x0 = ndarray::array![[10.0, -30.0], [5.0, 1.0]];
        let c = ndarray::array![[0.5], [-0.2]];
        let a = integrate(&Affine, x0.clone(), c.view(), &cfg, &mut [rng::seeded(1), rng::seeded(2)]).unwrap();
        let b = integrate(&Affine, x0, c.view(), &det, &mut [rng::seeded(3), rng::seeded(4)]).unwrap();
        assert_eq!(a, b);
    }

    fn unit_stats() -> NormalizationStats<f64> {
        NormalizationStats {
            ideal: vec![0.0],
            nadir: vec![1.0],
            y_mean: vec![0.0],
            y_std: vec![1.0],
            lower_bounds: vec![0.0, -1.0],
            upper_bounds: vec![0.5, 1.0],
        }
    }

    #[test]
    fn batch_is_clipped_and_order_independent() {
        let g = GaussianDenoiser { d: 2, m: 1, data_std: 3.0 };
        let cfg = SamplerConfig { steps: 8, seed: 7, ..Default::default() };
        let t = ndarray::array![[0.1], [0.2], [0.3], [0.4]];
        let out = sample_batch(&g, &unit_stats(), t.view(), &cfg).unwrap();
        assert_eq!(out.nrows(), 4);
        for row in out.rows() {
            assert!(row[0] >= 0.0 && row[0] <= 0.5 && row[1] >= -1.0 && row[1] <= 1.0);
        }
        let perm = [2usize, 0, 3, 1];
        let tp = t.select(ndarray::Axis(0), &perm);
        let outp = sample_with_ids(&g, &unit_stats(), tp.view(), &perm, &cfg).unwrap();
        assert_eq!(outp, out.select(ndarray::Axis(0), &perm));

        let mut r = target_stream(cfg.seed, 2);
        let one = sample_one(&g, &unit_stats(), &[0.3], &cfg, &mut r).unwrap();
        assert_eq!(one, out.row(2).to_vec());
    }

    #[test]
    fn shape_errors() {
        let g = GaussianDenoiser { d: 3, m: 1, data_std: 1.0 };
        let t = ndarray::array![[0.1]];
        assert!(sample_batch(&g, &unit_stats(), t.view(), &SamplerConfig::default()).is_err());
        assert!(SamplerConfig { steps: 1, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { sigma_min: 100.0, ..Default::default() }.validate().is_err());
    }
}
