//! Conditional EDM denoiser.
//!
//! `D(x; y, σ) = c_skip(σ)·x + c_out(σ)·F(c_in(σ)·x, rff(σ), e(y))`, where `F`
//! is a residual MLP and `e(y)` is a learned linear embedding of the z-scored
//! objectives, or a learned null embedding for the unconditional branch.
//!
//! All trainable parameters live in one flat vector. [`Layout`] gives the
//! offset and shape of every tensor, so optimizer, EMA and checkpoint code only
//! ever deal with slices. Gradients are computed by hand.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    cosine_lr, ema_update, train, write_metrics_csv, AdamW, MetricRow, TrainOutcome, TrainingConfig,
};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PcdError, Result};
use crate::pareto::NormalizationStats;
use crate::rng;
use crate::sampler::Denoiser;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub width: usize,
    /// Number of residual blocks.
    pub depth: usize,
    pub rff_dim: usize,
    pub cond_dim: usize,
    pub cfg_dropout_prob: f64,
    pub sigma_data: f64,
    pub p_mean: f64,
    pub p_std: f64,
    /// Start with `F ≡ 0`.
    pub zero_init_output: bool,
    /// Seeds initial weights and the RFF frequencies.
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 512,
            depth: 4,
            rff_dim: 16,
            cond_dim: 32,
            cfg_dropout_prob: 0.25,
            sigma_data: 1.0,
            p_mean: -1.2,
            p_std: 1.2,
            zero_init_output: true,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.width < 1 || self.rff_dim < 1 || self.cond_dim < 1 {
            return Err(PcdError::InvalidArgument(
                "width, depth, rff_dim and cond_dim must all be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.cfg_dropout_prob) {
            return Err(PcdError::InvalidArgument(format!(
                "cfg_dropout_prob must lie in [0, 1), got {}",
                self.cfg_dropout_prob
            )));
        }
        if !(self.sigma_data > 0.0) || !(self.p_std > 0.0) || !self.p_mean.is_finite() {
            return Err(PcdError::InvalidArgument(
                "sigma_data and p_std must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Offsets of every tensor inside the flat parameter vector. Matrices are
/// stored row-major as `(out, in)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub m: usize,
    pub width: usize,
    pub depth: usize,
    pub rff_dim: usize,
    pub cond_dim: usize,
    pub w_cond: usize,
    pub b_cond: usize,
    pub null_embed: usize,
    pub w_in: usize,
    pub b_in: usize,
    pub blocks: Vec<(usize, usize)>,
    pub w_out: usize,
    pub b_out: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &DenoiserConfig, d: usize, m: usize) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let in_dim = d + 2 * cfg.rff_dim + cfg.cond_dim;
        let w_cond = take(cfg.cond_dim * m);
        let b_cond = take(cfg.cond_dim);
        let null_embed = take(cfg.cond_dim);
        let w_in = take(cfg.width * in_dim);
        let b_in = take(cfg.width);
        let blocks = (0..cfg.depth)
            .map(|_| (take(cfg.width * cfg.width), take(cfg.width)))
            .collect();
        let w_out = take(d * cfg.width);
        let b_out = take(d);
        Self {
            d,
            m,
            width: cfg.width,
            depth: cfg.depth,
            rff_dim: cfg.rff_dim,
            cond_dim: cfg.cond_dim,
            w_cond,
            b_cond,
            null_embed,
            w_in,
            b_in,
            blocks,
            w_out,
            b_out,
            total: off,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.d + 2 * self.rff_dim + self.cond_dim
    }

    /// Ranges that receive weight decay: the MLP weight matrices.
    pub fn decayed_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut r = vec![self.w_in..self.w_in + self.width * self.in_dim()];
        for &(w, _) in &self.blocks {
            r.push(w..w + self.width * self.width);
        }
        r.push(self.w_out..self.w_out + self.d * self.width);
        r
    }
}

fn mat<T>(p: &[T], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout fits")
}

fn mat_mut<T>(p: &mut [T], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout fits")
}

fn vec_of<T>(p: &[T], off: usize, n: usize) -> ArrayView1<'_, T> {
    ArrayView1::from(&p[off..off + n])
}

fn vec_mut<T>(p: &mut [T], off: usize, n: usize) -> ArrayViewMut1<'_, T> {
    ArrayViewMut1::from(&mut p[off..off + n])
}

/// EDM preconditioning coefficients `(c_skip, c_out, c_in)`.
pub fn preconditioning<T: Scalar>(sigma: T, sigma_data: T) -> (T, T, T) {
    let s2 = sigma * sigma + sigma_data * sigma_data;
    let root = s2.sqrt();
    (sigma_data * sigma_data / s2, sigma * sigma_data / root, T::one() / root)
}

/// `λ(σ) = (σ² + σ_d²) / (σ·σ_d)²`.
pub fn loss_weight<T: Scalar>(sigma: T, sigma_data: T) -> T {
    let sd = sigma * sigma_data;
    (sigma * sigma + sigma_data * sigma_data) / (sd * sd)
}

/// `[cos(2π f_k c), sin(2π f_k c)]` with `c = ln(σ)/4`.
pub fn rff_embed<T: Scalar>(sigma: T, frequencies: &[T]) -> Result<Vec<T>> {
    if !(sigma > T::zero()) {
        return Err(PcdError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let c = sigma.ln() / T::lit(4.0);
    let two_pi = T::lit(std::f64::consts::TAU);
    let mut out = Vec::with_capacity(2 * frequencies.len());
    out.extend(frequencies.iter().map(|&f| (two_pi * f * c).cos()));
    out.extend(frequencies.iter().map(|&f| (two_pi * f * c).sin()));
    Ok(out)
}

/// Which parameter set a forward pass reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSet {
    Live,
    Ema,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel<T> {
    pub config: DenoiserConfig,
    pub layout: Layout,
    pub params: Vec<T>,
    pub ema: Vec<T>,
    pub rff_freq: Vec<T>,
    pub stats: NormalizationStats<T>,
}

/// One training (or held-out) batch in model space: `x` in `[-1, 1]`, `y`
/// z-scored.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub x: Array2<T>,
    pub y: Array2<T>,
    pub w: Vec<T>,
}

/// Random draws for one evaluation of the loss.
#[derive(Debug, Clone)]
pub struct LossDraws<T> {
    pub sigmas: Vec<T>,
    /// Already scaled by σ.
    pub noise: Array2<T>,
    /// `true` replaces the row's condition by the null embedding.
    pub drop: Vec<bool>,
}

struct Cache<T> {
    input: Array2<T>,
    /// Pre-activations `h_0 … h_depth`.
    hidden: Vec<Array2<T>>,
    /// `relu(h_k)` for each entry of `hidden`.
    active: Vec<Array2<T>>,
    sigmas: Vec<T>,
    c_out: Vec<T>,
    use_cond: Vec<bool>,
}

impl<T: Scalar> DenoiserModel<T> {
    pub fn new(config: DenoiserConfig, stats: NormalizationStats<T>) -> Result<Self> {
        config.validate()?;
        let (d, m) = (stats.d(), stats.m());
        if d == 0 || m == 0 {
            return Err(PcdError::Shape("stats must describe d >= 1 and m >= 1".into()));
        }
        let layout = Layout::new(&config, d, m);
        let mut r = rng::seeded(rng::derive_seed(config.seed, 0x1417));
        let mut params = vec![T::zero(); layout.total];

        let mut uniform = |p: &mut [T], off: usize, n: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[off..off + n] {
                *v = T::lit(r.random_range(-bound..bound));
            }
        };
        let (w, cd, in_dim) = (config.width, config.cond_dim, layout.in_dim());
        uniform(&mut params, layout.w_cond, cd * m, m);
        uniform(&mut params, layout.null_embed, cd, 1);
        uniform(&mut params, layout.w_in, w * in_dim, in_dim);
        uniform(&mut params, layout.b_in, w, in_dim);
        for &(wo, bo) in &layout.blocks {
            uniform(&mut params, wo, w * w, w);
            uniform(&mut params, bo, w, w);
        }
        if !config.zero_init_output {
            uniform(&mut params, layout.w_out, d * w, w);
            uniform(&mut params, layout.b_out, d, w);
        }

        let mut fr = rng::seeded(rng::derive_seed(config.seed, 0xf00f));
        let rff_freq = (0..config.rff_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut fr);
                T::lit(z)
            })
            .collect();

        Ok(Self {
            config,
            layout,
            ema: params.clone(),
            params,
            rff_freq,
            stats,
        })
    }

    pub fn d(&self) -> usize {
        self.layout.d
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    fn set(&self, which: ParamSet) -> &[T] {
        match which {
            ParamSet::Live => &self.params,
            ParamSet::Ema => &self.ema,
        }
    }

    fn check_shapes(&self, x: ArrayView2<T>, sigmas: &[T], cond: Option<ArrayView2<T>>) -> Result<()> {
        if x.ncols() != self.d() {
            return Err(PcdError::Shape(format!("x has {} columns, model expects {}", x.ncols(), self.d())));
        }
        if sigmas.len() != x.nrows() {
            return Err(PcdError::LengthMismatch { expected: x.nrows(), got: sigmas.len() });
        }
        if let Some(c) = cond {
            if c.ncols() != self.m() || c.nrows() != x.nrows() {
                return Err(PcdError::Shape(format!(
                    "condition is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    x.nrows(),
                    self.m()
                )));
            }
        }
        Ok(())
    }

    fn forward(
        &self,
        p: &[T],
        x: ArrayView2<T>,
        sigmas: &[T],
        cond: Option<ArrayView2<T>>,
        drop: Option<&[bool]>,
    ) -> Result<(Array2<T>, Cache<T>)> {
        let l = &self.layout;
        let b = x.nrows();
        let sd = T::lit(self.config.sigma_data);
        let (rd, cd) = (l.rff_dim, l.cond_dim);

        let mut input = Array2::<T>::zeros((b, l.in_dim()));
        let mut c_skip = Vec::with_capacity(b);
        let mut c_out = Vec::with_capacity(b);
        for i in 0..b {
            let (cs, co, ci) = preconditioning(sigmas[i], sd);
            c_skip.push(cs);
            c_out.push(co);
            let mut row = input.row_mut(i);
            for j in 0..l.d {
                row[j] = ci * x[[i, j]];
            }
            let e = rff_embed(sigmas[i], &self.rff_freq)?;
            for (k, v) in e.into_iter().enumerate() {
                row[l.d + k] = v;
            }
        }

        let use_cond: Vec<bool> = (0..b)
            .map(|i| cond.is_some() && !drop.is_some_and(|dm| dm[i]))
            .collect();
        {
            let mut emb = input.slice_mut(s![.., l.d + 2 * rd..]);
            if let Some(c) = cond {
                let wc = mat(p, l.w_cond, cd, l.m);
                general_mat_mul(T::one(), &c, &wc.t(), T::zero(), &mut emb);
                emb += &vec_of(p, l.b_cond, cd);
            }
            let null = vec_of(p, l.null_embed, cd);
            for (i, &u) in use_cond.iter().enumerate() {
                if !u {
                    emb.row_mut(i).assign(&null);
                }
            }
        }

        let mut h = input.dot(&mat(p, l.w_in, l.width, l.in_dim()).t());
        h += &vec_of(p, l.b_in, l.width);
        let mut hidden = Vec::with_capacity(l.depth + 1);
        let mut active = Vec::with_capacity(l.depth + 1);
        for &(wo, bo) in &l.blocks {
            let a = h.mapv(relu);
            let mut next = a.dot(&mat(p, wo, l.width, l.width).t());
            Zip::from(&mut next).and(&h).for_each(|n, &hv| *n += hv);
            next += &vec_of(p, bo, l.width);
            hidden.push(h);
            active.push(a);
            h = next;
        }
        let a = h.mapv(relu);
        hidden.push(h);
        let mut f = a.dot(&mat(p, l.w_out, l.d, l.width).t());
        active.push(a);
        f += &vec_of(p, l.b_out, l.d);

        for i in 0..b {
            let mut row = f.row_mut(i);
            for j in 0..l.d {
                row[j] = c_skip[i] * x[[i, j]] + c_out[i] * row[j];
            }
        }
        Ok((
            f,
            Cache {
                input,
                hidden,
                active,
                sigmas: sigmas.to_vec(),
                c_out,
                use_cond,
            },
        ))
    }

    /// Denoised batch. Every row has its own σ; `cond = None` runs the
    /// unconditional branch for all rows.
    pub fn denoise_rows(
        &self,
        which: ParamSet,
        x: ArrayView2<T>,
        sigmas: &[T],
        cond: Option<ArrayView2<T>>,
    ) -> Result<Array2<T>> {
        self.check_shapes(x, sigmas, cond)?;
        if let Some(s) = sigmas.iter().find(|s| !(**s > T::zero())) {
            return Err(PcdError::InvalidArgument(format!("sigma must be positive, got {s}")));
        }
        Ok(self.forward(self.set(which), x, sigmas, cond, None)?.0)
    }

    /// Single-vector denoise with the EMA parameters.
    pub fn denoise(&self, x: &[T], sigma: T, cond: Option<&[T]>) -> Result<Vec<T>> {
        let xv = ArrayView2::from_shape((1, x.len()), x).map_err(|e| PcdError::Shape(e.to_string()))?;
        let cv = match cond {
            Some(c) => Some(ArrayView2::from_shape((1, c.len()), c).map_err(|e| PcdError::Shape(e.to_string()))?),
            None => None,
        };
        Ok(self.denoise_rows(ParamSet::Ema, xv, &[sigma], cv)?.row(0).to_vec())
    }

    /// Weighted denoising loss `mean_i w_i·λ(σ_i)·‖D(x_i + n_i) − x_i‖²` and its
    /// gradient with respect to `p`.
    pub fn loss_and_grad(&self, p: &[T], batch: &Batch<T>, draws: &LossDraws<T>) -> Result<(T, Vec<T>)> {
        let (loss, resid, cache) = self.loss_forward(p, batch, draws)?;
        let grad = self.backward(p, batch, &resid, &cache);
        Ok((loss, grad))
    }

    /// Loss only, for held-out evaluation.
    pub fn loss(&self, p: &[T], batch: &Batch<T>, draws: &LossDraws<T>) -> Result<T> {
        Ok(self.loss_forward(p, batch, draws)?.0)
    }

    fn loss_forward(&self, p: &[T], batch: &Batch<T>, draws: &LossDraws<T>) -> Result<(T, Array2<T>, Cache<T>)> {
        let n = batch.x.nrows();
        if n == 0 {
            return Err(PcdError::Empty("loss on an empty batch"));
        }
        if p.len() != self.layout.total {
            return Err(PcdError::LengthMismatch { expected: self.layout.total, got: p.len() });
        }
        if batch.w.len() != n || draws.drop.len() != n || draws.noise.dim() != batch.x.dim() {
            return Err(PcdError::Shape("batch and draws disagree in size".into()));
        }
        self.check_shapes(batch.x.view(), &draws.sigmas, Some(batch.y.view()))?;
        let noisy = &batch.x + &draws.noise;
        let (d_out, cache) = self.forward(p, noisy.view(), &draws.sigmas, Some(batch.y.view()), Some(&draws.drop))?;

        let sd = T::lit(self.config.sigma_data);
        let inv_n = T::one() / T::of_usize(n);
        let resid = d_out - &batch.x;
        let mut total = T::zero();
        for i in 0..n {
            let sq: T = resid.row(i).iter().map(|&r| r * r).sum();
            let term = batch.w[i] * loss_weight(draws.sigmas[i], sd) * sq;
            if !term.is_finite() {
                return Err(PcdError::NonFinite(format!(
                    "loss term at batch row {i} (sigma = {}) is {term}",
                    draws.sigmas[i]
                )));
            }
            total += term;
        }
        Ok((total * inv_n, resid, cache))
    }

    fn backward(&self, p: &[T], batch: &Batch<T>, resid: &Array2<T>, cache: &Cache<T>) -> Vec<T> {
        let l = &self.layout;
        let n = resid.nrows();
        let sd = T::lit(self.config.sigma_data);
        let two_over_n = T::lit(2.0) / T::of_usize(n);
        let mut grad = vec![T::zero(); l.total];

        // dL/dF = c_out · 2 w λ (D − x) / n
        let mut g_f = resid.clone();
        for (i, mut row) in g_f.rows_mut().into_iter().enumerate() {
            let s = two_over_n * batch.w[i] * loss_weight(cache.sigmas[i], sd) * cache.c_out[i];
            row.mapv_inplace(|v| v * s);
        }

        let h_last = &cache.hidden[l.depth];
        general_mat_mul(T::one(), &g_f.t(), &cache.active[l.depth], T::zero(), &mut mat_mut(&mut grad, l.w_out, l.d, l.width));
        vec_mut(&mut grad, l.b_out, l.d).assign(&g_f.sum_axis(Axis(0)));
        let mut g_h = g_f.dot(&mat(p, l.w_out, l.d, l.width));
        mask_relu(&mut g_h, h_last);

        let mut through = Array2::<T>::zeros(g_h.dim());
        for k in (0..l.depth).rev() {
            let (wo, bo) = l.blocks[k];
            let h_k = &cache.hidden[k];
            general_mat_mul(
                T::one(),
                &g_h.t(),
                &cache.active[k],
                T::zero(),
                &mut mat_mut(&mut grad, wo, l.width, l.width),
            );
            vec_mut(&mut grad, bo, l.width).assign(&g_h.sum_axis(Axis(0)));
            general_mat_mul(T::one(), &g_h, &mat(p, wo, l.width, l.width), T::zero(), &mut through);
            Zip::from(&mut g_h).and(&through).and(h_k).for_each(|g, &t, &hv| {
                if hv > T::zero() {
                    *g += t;
                }
            });
        }

        general_mat_mul(
            T::one(),
            &g_h.t(),
            &cache.input,
            T::zero(),
            &mut mat_mut(&mut grad, l.w_in, l.width, l.in_dim()),
        );
        vec_mut(&mut grad, l.b_in, l.width).assign(&g_h.sum_axis(Axis(0)));
        let emb_cols = l.d + 2 * l.rff_dim..l.in_dim();
        let g_emb = g_h.dot(&mat(p, l.w_in, l.width, l.in_dim()).slice(s![.., emb_cols]));

        let mut g_wc = Array2::<T>::zeros((l.cond_dim, l.m));
        let mut g_bc = Array1::<T>::zeros(l.cond_dim);
        let mut g_null = Array1::<T>::zeros(l.cond_dim);
        for i in 0..n {
            let ge = g_emb.row(i);
            if cache.use_cond[i] {
                let yi = batch.y.row(i);
                for a in 0..l.cond_dim {
                    for b in 0..l.m {
                        g_wc[[a, b]] += ge[a] * yi[b];
                    }
                }
                g_bc += &ge;
            } else {
                g_null += &ge;
            }
        }
        mat_mut(&mut grad, l.w_cond, l.cond_dim, l.m).assign(&g_wc);
        vec_mut(&mut grad, l.b_cond, l.cond_dim).assign(&g_bc);
        vec_mut(&mut grad, l.null_embed, l.cond_dim).assign(&g_null);
        grad
    }

    /// Fresh random draws for a batch of `n` rows.
    pub fn draw(&self, n: usize, r: &mut rng::Rng) -> LossDraws<T> {
        let d = self.d();
        let mut sigmas = Vec::with_capacity(n);
        let mut noise = Array2::zeros((n, d));
        let mut drop = Vec::with_capacity(n);
        for i in 0..n {
            let z: f64 = StandardNormal.sample(r);
            let sigma = (self.config.p_mean + self.config.p_std * z).exp();
            sigmas.push(T::lit(sigma));
            for j in 0..d {
                let e: f64 = StandardNormal.sample(r);
                noise[[i, j]] = T::lit(sigma * e);
            }
            drop.push(r.random::<f64>() < self.config.cfg_dropout_prob);
        }
        LossDraws { sigmas, noise, drop }
    }
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

fn mask_relu<T: Scalar>(g: &mut Array2<T>, h: &Array2<T>) {
    ndarray::Zip::from(g).and(h).for_each(|g, &h| {
        if !(h > T::zero()) {
            *g = T::zero();
        }
    });
}

impl<T: Scalar> Denoiser<T> for DenoiserModel<T> {
    fn dim(&self) -> usize {
        self.d()
    }

    fn cond_dim(&self) -> usize {
        self.m()
    }

    fn denoise_batch(&self, x: ArrayView2<T>, sigma: T, cond: Option<ArrayView2<T>>) -> Result<Array2<T>> {
        let sigmas = vec![sigma; x.nrows()];
        self.denoise_rows(ParamSet::Ema, x, &sigmas, cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn stats(d: usize, m: usize) -> NormalizationStats<f64> {
        NormalizationStats {
            ideal: vec![0.0; m],
            nadir: vec![1.0; m],
            y_mean: vec![0.0; m],
            y_std: vec![1.0; m],
            lower_bounds: vec![-1.0; d],
            upper_bounds: vec![1.0; d],
        }
    }

    fn small(zero_out: bool) -> DenoiserModel<f64> {
        let cfg = DenoiserConfig {
            width: 8,
            depth: 2,
            rff_dim: 3,
            cond_dim: 4,
            zero_init_output: zero_out,
            seed: 3,
            ..Default::default()
        };
        DenoiserModel::new(cfg, stats(3, 2)).unwrap()
    }

    fn batch(n: usize, d: usize, m: usize, seed: u64) -> Batch<f64> {
        let mut r = rng::seeded(seed);
        Batch {
            x: Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0)),
            y: Array2::from_shape_fn((n, m), |_| r.random_range(-2.0..2.0)),
            w: (0..n).map(|_| r.random_range(0.1..2.0)).collect(),
        }
    }

    #[test]
    fn rff_at_unit_sigma() {
        let e = rff_embed(1.0, &[0.3, -1.2, 2.0]).unwrap();
        assert_eq!(e, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(rff_embed(0.0, &[1.0]).is_err());
        let e: Vec<f64> = rff_embed(7.3, &[0.3, -1.2, 2.0]).unwrap();
        assert!(e.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_output_layer_gives_skip_only() {
        let m = small(true);
        let x = [0.3, -0.2, 0.9];
        let sigma = 0.7;
        let (cs, _, _) = preconditioning(sigma, 1.0);
        let out = m.denoise(&x, sigma, Some(&[0.1, 0.2])).unwrap();
        for (o, xi) in out.iter().zip(x) {
            assert_eq!(*o, cs * xi);
        }
    }

    #[test]
    fn tiny_sigma_returns_input() {
        let m = small(false);
        let x = [0.3, -0.2, 0.9];
        let out = m.denoise(&x, 1e-6, None).unwrap();
        for (o, xi) in out.iter().zip(x) {
            assert!((o - xi).abs() < 1e-4);
        }
    }

    #[test]
    fn dropped_condition_equals_unconditional() {
        let m = small(false);
        let b = batch(4, 3, 2, 1);
        let sig = vec![0.5; 4];
        let uncond = m.denoise_rows(ParamSet::Live, b.x.view(), &sig, None).unwrap();
        let (dropped, _) = m
            .forward(&m.params, b.x.view(), &sig, Some(b.y.view()), Some(&[true; 4]))
            .unwrap();
        assert_eq!(uncond, dropped);
    }

    #[test]
    fn shape_errors() {
        let m = small(false);
        assert!(m.denoise(&[0.0; 2], 1.0, None).is_err());
        assert!(m.denoise(&[0.0; 3], 1.0, Some(&[0.0; 3])).is_err());
        assert!(m.denoise(&[0.0; 3], -1.0, None).is_err());
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let m = small(false);
        let b = batch(6, 3, 2, 2);
        let mut draws = m.draw(6, &mut rng::seeded(5));
        let (loss, grad) = m.loss_and_grad(&m.params, &b, &draws).unwrap();
        let mut b2 = b.clone();
        b2.w.iter_mut().for_each(|w| *w *= 2.0);
        let (loss2, grad2) = m.loss_and_grad(&m.params, &b2, &draws).unwrap();
        assert!((loss2 - 2.0 * loss).abs() < 1e-12 * loss.abs().max(1.0));
        for (g, g2) in grad.iter().zip(&grad2) {
            assert!((g2 - 2.0 * g).abs() < 1e-10 * g.abs().max(1.0));
        }
        b2.w.iter_mut().for_each(|w| *w = 0.0);
        draws.noise.fill(0.0);
        let (zero, g0) = m.loss_and_grad(&m.params, &b2, &draws).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = small(false);
        let b = batch(5, 3, 2, 7);
        let mut draws = m.draw(5, &mut rng::seeded(11));
        draws.drop = vec![false, true, false, false, true];
        let (_, grad) = m.loss_and_grad(&m.params, &b, &draws).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut p = m.params.clone();
        for k in 0..p.len() {
            let orig = p[k];
            p[k] = orig + h;
            let lp = m.loss(&p, &b, &draws).unwrap();
            p[k] = orig - h;
            let lm = m.loss(&p, &b, &draws).unwrap();
            p[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn dropout_rate() {
        let m = small(false);
        let draws = m.draw(100_000, &mut rng::seeded(1));
        let k = draws.drop.iter().filter(|&&d| d).count() as f64;
        let p: f64 = 0.25;
        let sd = (p * (1.0 - p) * 1e5).sqrt();
        assert!((k - p * 1e5).abs() < 3.0 * sd, "{k}");
    }

    #[test]
    fn f32_model_runs() {
        let cfg = DenoiserConfig { width: 16, depth: 2, ..Default::default() };
        let m = DenoiserModel::<f32>::new(cfg, stats(2, 1).cast()).unwrap();
        let out = m.denoise(&[0.1, 0.2], 2.0, Some(&[0.5])).unwrap();
        assert_eq!(out.len(), 2);
    }
}
