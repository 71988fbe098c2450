//! Domain types shared across the laboratory.
//!
//! Every type validates its invariants through [`Validate`]; JSON is the
//! interchange format between subcommands and all field names are snake_case.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance for orthonormality of a [`SubspaceBasis`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Lower end of the accepted total mass of a [`RadialDensity`].
pub const RADIAL_MASS_DEFICIT: f64 = 1e-6;

pub trait Validate: Sized {
    /// Checks every invariant, naming the first one that fails.
    fn check(&self) -> Result<()>;

    fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }
}

/// Parses a JSON document and validates the result.
pub fn from_json<T: DeserializeOwned + Validate>(s: &str) -> Result<T> {
    serde_json::from_str::<T>(s)?.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Cube,
    Ball,
    Simplex,
    #[serde(alias = "laplace")]
    ProductLaplace,
    #[serde(alias = "gaussian")]
    StandardGaussian,
}

impl BodyKind {
    pub const ALL: [BodyKind; 5] = [
        BodyKind::Cube,
        BodyKind::Ball,
        BodyKind::Simplex,
        BodyKind::ProductLaplace,
        BodyKind::StandardGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BodyKind::Cube => "cube",
            BodyKind::Ball => "ball",
            BodyKind::Simplex => "simplex",
            BodyKind::ProductLaplace => "product_laplace",
            BodyKind::StandardGaussian => "standard_gaussian",
        }
    }
}

impl fmt::Display for BodyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BodyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cube" => Ok(BodyKind::Cube),
            "ball" => Ok(BodyKind::Ball),
            "simplex" => Ok(BodyKind::Simplex),
            "product_laplace" | "laplace" => Ok(BodyKind::ProductLaplace),
            "standard_gaussian" | "gaussian" => Ok(BodyKind::StandardGaussian),
            other => Err(Error::invalid(format!("unknown body kind `{other}`"))),
        }
    }
}

/// An isotropic log-concave source distribution from the fixed catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: BodyKind,
    pub dimension: usize,
}

impl BodySpec {
    pub fn new(kind: BodyKind, dimension: usize) -> Result<Self> {
        Self { kind, dimension }.validate()
    }
}

impl Validate for BodySpec {
    fn check(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("body dimension must be >= 1"));
        }
        Ok(())
    }
}

/// Centered gaussian `γ_n[v]` with covariance `v·Id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec<T> {
    pub dimension: usize,
    pub variance: T,
}

impl<T: Real> GaussianSpec<T> {
    pub fn new(dimension: usize, variance: T) -> Result<Self> {
        Self { dimension, variance }.validate()
    }
}

impl<T: Real> Validate for GaussianSpec<T> {
    fn check(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("gaussian dimension must be >= 1"));
        }
        if !(self.variance > T::zero() && self.variance.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian variance must be positive and finite, got {}",
                self.variance
            )));
        }
        Ok(())
    }
}

/// Noise schedule for the convolution step: `λ = 1/(5α + 20)` and the noise
/// variance `n^(-αλ)` in ambient dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionSchedule<T> {
    pub alpha: T,
    pub lambda: T,
    pub noise_variance: T,
    pub dimension: usize,
}

impl<T: Real> ConvolutionSchedule<T> {
    pub const MAX_ALPHA: f64 = 1e5;

    pub fn lambda_for(alpha: T) -> T {
        (T::lit(5.0) * alpha + T::lit(20.0)).recip()
    }

    pub fn new(alpha: T, dimension: usize) -> Result<Self> {
        let lambda = Self::lambda_for(alpha);
        let n = T::from_usize_lossy(dimension);
        Self {
            alpha,
            lambda,
            noise_variance: n.powf(-alpha * lambda),
            dimension,
        }
        .validate()
    }
}

impl<T: Real> Validate for ConvolutionSchedule<T> {
    fn check(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::lit(Self::MAX_ALPHA)) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1e5), got {}", self.alpha)));
        }
        if self.dimension == 0 {
            return Err(Error::invalid("schedule dimension must be >= 1"));
        }
        if self.lambda != Self::lambda_for(self.alpha) {
            return Err(Error::invalid("lambda must equal 1/(5 alpha + 20)"));
        }
        let expected = T::from_usize_lossy(self.dimension).powf(-self.alpha * self.lambda);
        if !(self.noise_variance > T::zero()) || (self.noise_variance - expected).abs() > T::epsilon() * T::lit(8.0) * expected {
            return Err(Error::invalid("noise_variance must equal n^(-alpha lambda)"));
        }
        Ok(())
    }
}

/// An `ℓ`-dimensional subspace of `R^n`, given by `ℓ` orthonormal rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    /// Largest entry of `|B Bᵀ - I|`.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.rows.iter().enumerate() {
            for (j, b) in self.rows.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// The first `subspace_dim` standard basis vectors.
    pub fn coordinate(ambient_dim: usize, subspace_dim: usize) -> Result<Self> {
        let rows = (0..subspace_dim)
            .map(|i| {
                let mut r = vec![0.0; ambient_dim];
                r[i] = 1.0;
                r
            })
            .collect();
        Self {
            ambient_dim,
            subspace_dim,
            rows,
        }
        .validate()
    }
}

impl Validate for SubspaceBasis {
    fn check(&self) -> Result<()> {
        if self.subspace_dim == 0 || self.subspace_dim > self.ambient_dim {
            return Err(Error::Dimension(format!(
                "need 1 <= l <= n, got l={} n={}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if self.rows.len() != self.subspace_dim || self.rows.iter().any(|r| r.len() != self.ambient_dim) {
            return Err(Error::Dimension("basis rows do not match (l, n)".into()));
        }
        let dev = self.gram_deviation();
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!("basis rows are not orthonormal (deviation {dev:e})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RadialForm {
    /// Histogram: `edges.len() == mass.len() + 1`.
    Binned,
    /// The chi distribution with `n` degrees of freedom, i.e. `|γ_n[1]|`.
    ClosedFormChi { n: usize },
}

/// The radial density `g` of a spherically symmetric law, either as bins
/// (edges plus per-bin mass) or as the closed-form chi law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity<T> {
    pub edges: Vec<T>,
    pub mass: Vec<T>,
    pub form: RadialForm,
}

impl<T: Real> RadialDensity<T> {
    pub fn chi(n: usize) -> Result<Self> {
        Self {
            edges: Vec::new(),
            mass: Vec::new(),
            form: RadialForm::ClosedFormChi { n },
        }
        .validate()
    }

    pub fn binned(edges: Vec<T>, mass: Vec<T>) -> Result<Self> {
        Self {
            edges,
            mass,
            form: RadialForm::Binned,
        }
        .validate()
    }

    /// Unit mass at a single radius, placed in the bin `[r - w/2, r + w/2]`.
    pub fn point_mass(radius: T, width: T) -> Result<Self> {
        let half = width * T::lit(0.5);
        Self::binned(vec![radius - half, radius + half], vec![T::one()])
    }

    pub fn total_mass(&self) -> T {
        match self.form {
            RadialForm::Binned => self.mass.iter().copied().sum(),
            RadialForm::ClosedFormChi { .. } => T::one(),
        }
    }

    pub fn midpoints(&self) -> impl Iterator<Item = T> + '_ {
        self.edges.windows(2).map(|w| T::lit(0.5) * (w[0] + w[1]))
    }

    pub fn bin_count(&self) -> usize {
        self.mass.len()
    }

    /// Largest bin width.
    pub fn max_width(&self) -> T {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), |a, b| a.max(b))
    }
}

impl<T: Real> Validate for RadialDensity<T> {
    fn check(&self) -> Result<()> {
        match self.form {
            RadialForm::ClosedFormChi { n } => {
                if n == 0 {
                    return Err(Error::invalid("chi degrees of freedom must be >= 1"));
                }
                Ok(())
            }
            RadialForm::Binned => {
                if self.mass.is_empty() || self.edges.len() != self.mass.len() + 1 {
                    return Err(Error::invalid("binned radial density needs edges.len() == mass.len() + 1 >= 2"));
                }
                if self.edges[0] < T::zero() {
                    return Err(Error::invalid("radii must be nonnegative"));
                }
                if self.edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("radial grid must be strictly increasing"));
                }
                if self.mass.iter().any(|m| !(*m >= T::zero())) {
                    return Err(Error::invalid("radial mass must be nonnegative"));
                }
                let total = self.total_mass();
                let slack = T::epsilon() * T::from_usize_lossy(self.mass.len() + 4);
                if total < T::one() - T::lit(RADIAL_MASS_DEFICIT) || total > T::one() + slack {
                    return Err(Error::invalid(format!("radial mass must lie in [1 - 1e-6, 1], got {total}")));
                }
                Ok(())
            }
        }
    }
}

/// Pointwise density estimates of a projected sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub sample_count: usize,
    pub bandwidth: f64,
}

impl DensityEstimate {
    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

impl Validate for DensityEstimate {
    fn check(&self) -> Result<()> {
        if self.values.len() != self.points.len() || self.stderr.len() != self.points.len() {
            return Err(Error::invalid("density estimate arrays differ in length"));
        }
        if self.values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("density values must be nonnegative"));
        }
        if self.stderr.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("standard errors must be nonnegative"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        Ok(())
    }
}

/// `|f/γ - 1|` over a set of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport<T> {
    pub radius_grid: Vec<T>,
    pub sup_abs_deviation: T,
    pub per_point_ratios: Vec<T>,
}

impl<T: Real> RatioReport<T> {
    pub fn from_ratios(radius_grid: Vec<T>, per_point_ratios: Vec<T>) -> Self {
        let sup_abs_deviation = per_point_ratios
            .iter()
            .map(|r| (*r - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b));
        Self {
            radius_grid,
            sup_abs_deviation,
            per_point_ratios,
        }
    }
}

impl<T: Real> Validate for RatioReport<T> {
    fn check(&self) -> Result<()> {
        if self.radius_grid.len() != self.per_point_ratios.len() {
            return Err(Error::invalid("ratio report arrays differ in length"));
        }
        let sup = self
            .per_point_ratios
            .iter()
            .map(|r| (*r - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b));
        if !(self.sup_abs_deviation >= T::zero()) || sup != self.sup_abs_deviation {
            return Err(Error::invalid("sup_abs_deviation must equal max |ratio - 1|"));
        }
        Ok(())
    }
}

/// A hypothesis of the deconvolution sandwich that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "condition")]
pub enum ViolatedCondition<T> {
    /// `alpha <= c0 · n^(-8)` does not hold.
    NoiseTooLarge { alpha: T, bound: T },
    /// `100 (2n)^max(3β, 3/2) alpha^(1/4) < epsilon` does not hold.
    EpsilonBelowFloor { epsilon: T, floor: T },
    /// `epsilon < 1/100` does not hold.
    EpsilonTooLarge { epsilon: T },
}

/// Outcome of the deconvolution condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvCertificate<T> {
    pub admissible: bool,
    pub violated_conditions: Vec<ViolatedCondition<T>>,
    /// `min{R - 1, (2n)^β}`: the lower bound holds for `|x|` up to here.
    pub lower_radius: T,
    /// `min{(2n)^β, R} - 3`: the upper bound holds for `|x|` up to here.
    /// Negative values mean the upper bound certifies nothing.
    pub upper_radius: T,
    pub lower_factor: T,
    pub upper_factor: T,
    pub epsilon: T,
}

impl<T: Real> Validate for DeconvCertificate<T> {
    fn check(&self) -> Result<()> {
        if self.admissible != self.violated_conditions.is_empty() {
            return Err(Error::invalid("admissible must equal violated_conditions.is_empty()"));
        }
        if self.admissible && !(self.epsilon > T::zero() && self.epsilon < T::lit(0.01)) {
            return Err(Error::invalid("admissible certificate needs 0 < epsilon < 1/100"));
        }
        if self.epsilon > T::zero() && !(self.lower_factor < T::one() && T::one() < self.upper_factor) {
            return Err(Error::invalid("factors must bracket 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_spec_validation() {
        assert!(GaussianSpec::new(3, 1.0f64).is_ok());
        let err = GaussianSpec::new(3, 0.0f64).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(ref m) if m.contains("variance")));
        assert!(GaussianSpec::new(0, 1.0f64).is_err());
    }

    #[test]
    fn schedule_alpha_ten() {
        let s = ConvolutionSchedule::new(10.0f64, 100).unwrap();
        assert_eq!(s.lambda, 1.0 / 70.0);
        assert!((s.noise_variance - 100f64.powf(-1.0 / 7.0)).abs() < 1e-15);
        assert!((s.noise_variance - 0.517_947_467_923_121).abs() < 1e-12);
        assert!(ConvolutionSchedule::new(0.0f64, 10).is_err());
        assert!(ConvolutionSchedule::new(1e5f64, 10).is_err());
    }

    #[test]
    fn tampered_schedule_rejected() {
        let mut s = ConvolutionSchedule::new(10.0f64, 50).unwrap();
        s.lambda = 0.02;
        assert!(s.check().is_err());
    }

    #[test]
    fn body_kind_parsing() {
        assert_eq!("Product-Laplace".parse::<BodyKind>().unwrap(), BodyKind::ProductLaplace);
        assert!("torus".parse::<BodyKind>().is_err());
        assert!(BodySpec::new(BodyKind::Cube, 0).is_err());
    }

    #[test]
    fn radial_density_invariants() {
        assert!(RadialDensity::binned(vec![0.0, 1.0, 2.0], vec![0.5, 0.5]).is_ok());
        assert!(RadialDensity::binned(vec![0.0, 1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(RadialDensity::binned(vec![0.0, 1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(RadialDensity::binned(vec![0.0, 1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(RadialDensity::<f64>::chi(0).is_err());
    }

    #[test]
    fn ratio_report_sup() {
        let r = RatioReport::from_ratios(vec![0.0f64, 1.0, 2.0], vec![1.01, 0.97, 1.0]);
        assert!((r.sup_abs_deviation - 0.03).abs() < 1e-15);
        assert!(r.check().is_ok());
    }

    #[test]
    fn from_json_validates() {
        let ok: GaussianSpec<f64> = from_json(r#"{"dimension":2,"variance":0.5}"#).unwrap();
        assert_eq!(ok.dimension, 2);
        assert!(from_json::<GaussianSpec<f64>>(r#"{"dimension":2,"variance":-1}"#).is_err());
    }
}
