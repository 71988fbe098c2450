//! Numerical laboratory for the pointwise central limit theorem for convex
//! bodies.
//!
//! Samplers for isotropic log-concave laws, Haar-random projections, exact
//! spherical-marginal kernels, thin-shell statistics, kernel density
//! estimates of projected marginals and the gaussian deconvolution sandwich.
//!
//! Analytic code is generic over [`Real`] (`f32` or `f64`); Monte Carlo code
//! works in `f64`. Aliases with a `64`/`32` suffix fix the scalar type.

pub mod cli;
pub mod deconvolution;
pub mod density;
pub mod error;
pub mod grassmann;
pub mod model;
pub mod quad;
pub mod radial;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod special;
pub mod spherical;
pub mod suite;

pub use error::{Error, Result};
pub use model::{BodyKind, BodySpec, DensityEstimate, SubspaceBasis, Validate};
pub use samplers::{Pipeline, SampleBatch, SampleSource};
pub use scalar::Real;

pub type KernelParams64 = spherical::KernelParams<f64>;
pub type KernelParams32 = spherical::KernelParams<f32>;
pub type RadialDensity64 = model::RadialDensity<f64>;
pub type RadialDensity32 = model::RadialDensity<f32>;
pub type RatioReport64 = model::RatioReport<f64>;
pub type RatioReport32 = model::RatioReport<f32>;
pub type GaussianSpec64 = model::GaussianSpec<f64>;
pub type GaussianSpec32 = model::GaussianSpec<f32>;
pub type ConvolutionSchedule64 = model::ConvolutionSchedule<f64>;
pub type ConvolutionSchedule32 = model::ConvolutionSchedule<f32>;
pub type DeconvParams64 = deconvolution::DeconvParams<f64>;
pub type DeconvParams32 = deconvolution::DeconvParams<f32>;
pub type DeconvCertificate64 = model::DeconvCertificate<f64>;
pub type DeconvCertificate32 = model::DeconvCertificate<f32>;
pub type SandwichReport64 = deconvolution::SandwichReport<f64>;
pub type SandwichReport32 = deconvolution::SandwichReport<f32>;
