//! Offline multi-objective optimization with a Pareto-conditioned diffusion model.
//!
//! The pipeline has two phases. A conditional denoiser is trained on an offline
//! dataset whose samples are reweighted by how often they are dominated
//! ([`reweighting`], [`diffusion`]). Conditioning targets are then generated by
//! pairing good dataset points with reference directions and pushing them
//! toward the ideal point ([`refdirs`], [`conditioning`]), and one candidate is
//! sampled per target with classifier-free guidance ([`sampler`]). Candidates
//! are scored by percentile hypervolume ([`indicators`]).
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). Datasets and
//! benchmark oracles are always `f64`.

#[cfg(feature = "blas")]
extern crate blas_src;

pub mod benchmarks;
pub mod conditioning;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod indicators;
pub mod pareto;
pub mod refdirs;
pub mod reweighting;
pub mod rng;
pub mod sampler;
pub mod scalar;

pub use error::{PcdError, Result};
pub use scalar::Scalar;

/// Denoiser with 64-bit parameters.
pub type Model = diffusion::DenoiserModel<f64>;
/// Denoiser with 32-bit parameters.
pub type Model32 = diffusion::DenoiserModel<f32>;
pub type Normalization = pareto::NormalizationStats<f64>;
pub type Directions = refdirs::ReferenceDirections<f64>;
pub type Weights = reweighting::SampleWeights<f64>;
pub type Conditioning = conditioning::ConditioningSet<f64>;
