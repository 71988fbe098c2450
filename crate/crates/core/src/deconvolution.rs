//! Gaussian deconvolution: admissibility arithmetic for the density sandwich,
//! exact grid convolution, and a one-dimensional check of the sandwich.
//!
//! If `f_X * γ[α]` is `ε`-close to `γ[1 + α]` on `|x| <= R`, and
//!
//! ```text
//! α <= c0 · n^(-8)   and   100 (2n)^max(3β, 3/2) α^(1/4) < ε < 1/100,
//! ```
//!
//! then `f_X >= (1 - 6ε) γ[1]` on `|x| <= min{R - 1, (2n)^β}` and
//! `f_X <= (1 + 8ε) γ[1]` on `|x| <= min{(2n)^β, R} - 3`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeconvCertificate, Validate, ViolatedCondition};
use crate::scalar::Real;
use crate::special::normal_cdf;
use crate::spherical::gaussian_density;

pub const DEFAULT_C0: f64 = 1e-2;
/// Slack allowed in the pointwise sandwich inequalities.
pub const SANDWICH_SLACK: f64 = 1e-9;
/// The convolution kernel is cut at this many standard deviations.
pub const KERNEL_TRUNCATION: f64 = 8.0;

fn default_c0<T: Real>() -> T {
    T::lit(DEFAULT_C0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct DeconvParams<T> {
    pub n: usize,
    pub alpha: T,
    pub beta: T,
    pub epsilon: T,
    #[serde(alias = "R")]
    pub radius: T,
    #[serde(default = "default_c0")]
    pub c0: T,
}

impl<T: Real> DeconvParams<T> {
    pub fn new(n: usize, alpha: T, beta: T, epsilon: T, radius: T) -> Result<Self> {
        Self {
            n,
            alpha,
            beta,
            epsilon,
            radius,
            c0: default_c0(),
        }
        .validate()
    }

    pub fn with_c0(mut self, c0: T) -> Result<Self> {
        self.c0 = c0;
        self.validate()
    }
}

impl<T: Real> Validate for DeconvParams<T> {
    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("R", self.radius),
            ("c0", self.c0),
        ];
        for (name, v) in fields {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn check_conditions<T: Real>(p: &DeconvParams<T>) -> DeconvCertificate<T> {
    let n = T::from_usize_lossy(p.n);
    let two_n = n + n;
    let mut violated = Vec::new();

    let bound = p.c0 * n.powi(-8);
    if !(p.alpha <= bound) {
        violated.push(ViolatedCondition::NoiseTooLarge { alpha: p.alpha, bound });
    }
    let power = (T::lit(3.0) * p.beta).max(T::lit(1.5));
    let floor = T::lit(100.0) * two_n.powf(power) * p.alpha.sqrt().sqrt();
    if !(floor < p.epsilon) {
        violated.push(ViolatedCondition::EpsilonBelowFloor {
            epsilon: p.epsilon,
            floor,
        });
    }
    if !(p.epsilon < T::lit(0.01)) {
        violated.push(ViolatedCondition::EpsilonTooLarge { epsilon: p.epsilon });
    }

    let reach = two_n.powf(p.beta);
    DeconvCertificate {
        admissible: violated.is_empty(),
        violated_conditions: violated,
        lower_radius: (p.radius - T::one()).min(reach),
        upper_radius: reach.min(p.radius) - T::lit(3.0),
        lower_factor: T::one() - T::lit(6.0) * p.epsilon,
        upper_factor: T::one() + T::lit(8.0) * p.epsilon,
        epsilon: p.epsilon,
    }
}

/// Density values at `start + i·step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1d<T> {
    pub start: T,
    pub step: T,
    pub values: Vec<T>,
}

/// Density values at `(start[0] + i·step, start[1] + j·step)`, stored with
/// `j` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d<T> {
    pub start: [T; 2],
    pub step: T,
    pub shape: [usize; 2],
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dim")]
pub enum GridDensity<T> {
    OneD(Grid1d<T>),
    TwoD(Grid2d<T>),
}

impl<T: Real> Grid1d<T> {
    /// `f` sampled at `points` nodes on `[lo, hi]`.
    pub fn sample(lo: T, hi: T, points: usize, f: impl Fn(T) -> T) -> Self {
        let step = (hi - lo) / T::from_usize_lossy(points - 1);
        Self {
            start: lo,
            step,
            values: (0..points).map(|i| f(lo + step * T::from_usize_lossy(i))).collect(),
        }
    }

    pub fn node(&self, i: usize) -> T {
        self.start + self.step * T::from_usize_lossy(i)
    }
}

impl<T: Real> Grid2d<T> {
    pub fn sample(lo: [T; 2], step: T, shape: [usize; 2], f: impl Fn(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(shape[0] * shape[1]);
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                values.push(f(
                    lo[0] + step * T::from_usize_lossy(i),
                    lo[1] + step * T::from_usize_lossy(j),
                ));
            }
        }
        Self {
            start: lo,
            step,
            shape,
            values,
        }
    }
}

impl<T: Real> GridDensity<T> {
    pub fn step(&self) -> T {
        match self {
            GridDensity::OneD(g) => g.step,
            GridDensity::TwoD(g) => g.step,
        }
    }

    pub fn values(&self) -> &[T] {
        match self {
            GridDensity::OneD(g) => &g.values,
            GridDensity::TwoD(g) => &g.values,
        }
    }

    /// Riemann sum `Σ values · step^d`.
    pub fn mass(&self) -> T {
        let cell = match self {
            GridDensity::OneD(g) => g.step,
            GridDensity::TwoD(g) => g.step * g.step,
        };
        self.values().iter().copied().sum::<T>() * cell
    }
}

impl<T: Real> Validate for GridDensity<T> {
    fn check(&self) -> Result<()> {
        let step = self.step();
        if !(step > T::zero() && step.is_finite()) {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        if let GridDensity::TwoD(g) = self {
            if g.shape[0] * g.shape[1] != g.values.len() {
                return Err(Error::Dimension(format!(
                    "grid shape {:?} does not match {} values",
                    g.shape,
                    g.values.len()
                )));
            }
        }
        if self.values().iter().any(|v| !(*v >= T::zero() && v.is_finite())) {
            return Err(Error::invalid("grid density must be finite and nonnegative"));
        }
        let mass = self.mass();
        if !((mass - T::one()).abs() <= T::lit(1e-6)) {
            return Err(Error::invalid(format!("grid mass must be within 1e-6 of 1, got {mass}")));
        }
        Ok(())
    }
}

/// Weights `exp(-(k·step)²/(2α))` for `|k·step| <= 8√α`, normalized to sum 1.
fn kernel_weights<T: Real>(step: T, variance: T) -> Vec<T> {
    let reach = (T::lit(KERNEL_TRUNCATION) * variance.sqrt() / step).floor().to_usize().unwrap_or(0);
    let half_inv = T::lit(0.5) / variance;
    let raw: Vec<T> = (0..=2 * reach)
        .map(|i| {
            let d = step * (T::from_usize_lossy(i) - T::from_usize_lossy(reach));
            (-d * d * half_inv).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `out[i] = Σ_k w[k] · line[i + reach - k]`, zero beyond the ends.
fn convolve_line<T: Real>(line: &[T], weights: &[T]) -> Vec<T> {
    let reach = weights.len() / 2;
    let len = line.len() as isize;
    (0..line.len())
        .map(|i| {
            let mut acc = T::zero();
            for (k, &w) in weights.iter().enumerate() {
                let j = i as isize + reach as isize - k as isize;
                if (0..len).contains(&j) {
                    acc = acc + w * line[j as usize];
                }
            }
            acc
        })
        .collect()
}

/// Discrete convolution with the gaussian kernel of variance `variance`.
///
/// The grid must resolve the kernel: `step <= √variance / 2`. Two-dimensional
/// grids are convolved along each axis in turn.
pub fn grid_convolve<T: Real>(grid: &GridDensity<T>, variance: T) -> Result<GridDensity<T>> {
    grid.check()?;
    if !(variance > T::zero()) {
        return Err(Error::Domain(format!("variance must be positive, got {variance}")));
    }
    let step = grid.step();
    let half_sd = variance.sqrt() * T::lit(0.5);
    if step > half_sd {
        return Err(Error::GridTooCoarse {
            spacing: step.to_f64_lossy(),
            half_sd: half_sd.to_f64_lossy(),
        });
    }
    let w = kernel_weights(step, variance);
    Ok(match grid {
        GridDensity::OneD(g) => {
            let values: Vec<T> = g
                .values
                .par_chunks(g.values.len())
                .flat_map_iter(|line| convolve_line(line, &w))
                .collect();
            GridDensity::OneD(Grid1d { values, ..g.clone() })
        }
        GridDensity::TwoD(g) => {
            let [rows, cols] = g.shape;
            let along_j: Vec<T> = g.values.par_chunks(cols).flat_map_iter(|r| convolve_line(r, &w)).collect();
            let columns: Vec<Vec<T>> = (0..cols)
                .into_par_iter()
                .map(|j| {
                    let col: Vec<T> = (0..rows).map(|i| along_j[i * cols + j]).collect();
                    convolve_line(&col, &w)
                })
                .collect();
            let mut values = vec![T::zero(); rows * cols];
            for (j, col) in columns.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    values[i * cols + j] = *v;
                }
            }
            GridDensity::TwoD(Grid2d { values, ..g.clone() })
        }
    })
}

/// Isotropic log-concave densities on the line with closed-form gaussian
/// convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Body1d<T> {
    Gaussian { variance: T },
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// Laplace with scale `1/√2`.
    Laplace,
}

impl<T: Real> Body1d<T> {
    pub fn density(&self, x: T) -> T {
        self.convolved_density(T::zero(), x)
    }

    /// Density of `X + √α G` at `x`; `α = 0` gives `f_X`.
    pub fn convolved_density(&self, alpha: T, x: T) -> T {
        let two = T::lit(2.0);
        match *self {
            Body1d::Gaussian { variance } => gaussian_density(1, variance + alpha, x.abs()),
            Body1d::Uniform => {
                let a = T::lit(3.0).sqrt();
                let height = T::one() / (two * a);
                if alpha == T::zero() {
                    return if x.abs() <= a { height } else { T::zero() };
                }
                let s = alpha.sqrt();
                height * (normal_cdf((x + a) / s) - normal_cdf((x - a) / s))
            }
            Body1d::Laplace => {
                let b = T::FRAC_1_SQRT_2();
                if alpha == T::zero() {
                    return (-x.abs() / b).exp() / (two * b);
                }
                let s = alpha.sqrt();
                let lead = (s * s / (two * b * b)).exp() / (two * b);
                lead * ((-x / b).exp() * normal_cdf(x / s - s / b) + (x / b).exp() * normal_cdf(-x / s - s / b))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Body1d::Gaussian { variance } => format!("gaussian(variance={variance})"),
            Body1d::Uniform => "uniform".into(),
            Body1d::Laplace => "laplace".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SandwichOutcome<T> {
    /// Both conclusions hold at every checked point.
    Verified,
    /// Hypothesis met but a conclusion fails somewhere.
    Violated,
    /// `sup |f_{X+Y}/γ[1+α] - 1|` on `|x| <= R` exceeds `ε`.
    HypothesisNotMet { max_deviation: T },
    /// The parameters are inadmissible; nothing is asserted.
    Refused { violated: Vec<ViolatedCondition<T>> },
}

/// Margins at one point; a margin is absent when the point lies outside
/// the radius certified for that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichPoint<T> {
    pub x: T,
    pub density: T,
    /// `f_X - (1 - 6ε) γ[1]`.
    pub lower_margin: Option<T>,
    /// `(1 + 8ε) γ[1] - f_X`.
    pub upper_margin: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SandwichReport<T> {
    pub body: Body1d<T>,
    pub params: DeconvParams<T>,
    pub certificate: DeconvCertificate<T>,
    pub outcome: SandwichOutcome<T>,
    pub hypothesis_deviation: Option<T>,
    pub points: Vec<SandwichPoint<T>>,
}

impl<T: Real> SandwichReport<T> {
    pub fn min_lower_margin(&self) -> Option<T> {
        self.points.iter().filter_map(|p| p.lower_margin).reduce(T::min)
    }

    pub fn min_upper_margin(&self) -> Option<T> {
        self.points.iter().filter_map(|p| p.upper_margin).reduce(T::min)
    }
}

/// Checks the sandwich conclusions for a one-dimensional body at
/// `grid_points` equispaced points of `[-R, R]`.
pub fn verify_sandwich<T: Real>(body: Body1d<T>, p: &DeconvParams<T>, grid_points: usize) -> Result<SandwichReport<T>> {
    p.check()?;
    if p.n != 1 {
        return Err(Error::Dimension(format!("the sandwich check is one-dimensional; got n = {}", p.n)));
    }
    if grid_points < 2 {
        return Err(Error::invalid("need at least two grid points"));
    }
    if let Body1d::Gaussian { variance } = body {
        if !(variance > T::zero()) {
            return Err(Error::invalid("gaussian body needs positive variance"));
        }
    }
    let cert = check_conditions(p);
    let mut report = SandwichReport {
        body,
        params: *p,
        certificate: cert.clone(),
        outcome: SandwichOutcome::Verified,
        hypothesis_deviation: None,
        points: Vec::new(),
    };
    if !cert.admissible {
        report.outcome = SandwichOutcome::Refused {
            violated: cert.violated_conditions,
        };
        return Ok(report);
    }

    let r = p.radius;
    let xs: Vec<T> = (0..grid_points)
        .map(|i| -r + (r + r) * T::from_usize_lossy(i) / T::from_usize_lossy(grid_points - 1))
        .collect();
    let var_y = T::one() + p.alpha;
    let deviation = xs
        .par_iter()
        .map(|&x| (body.convolved_density(p.alpha, x) / gaussian_density(1, var_y, x.abs()) - T::one()).abs())
        .reduce(T::zero, T::max);
    report.hypothesis_deviation = Some(deviation);
    if !(deviation <= p.epsilon) {
        report.outcome = SandwichOutcome::HypothesisNotMet { max_deviation: deviation };
        return Ok(report);
    }

    let slack = T::lit(SANDWICH_SLACK);
    report.points = xs
        .par_iter()
        .map(|&x| {
            let f = body.density(x);
            let g = gaussian_density(1, T::one(), x.abs());
            SandwichPoint {
                x,
                density: f,
                lower_margin: (x.abs() <= cert.lower_radius).then(|| f - cert.lower_factor * g),
                upper_margin: (x.abs() <= cert.upper_radius).then(|| cert.upper_factor * g - f),
            }
        })
        .collect();
    let holds = |m: Option<T>| m.map_or(true, |m| m >= -slack);
    if !report.points.iter().all(|pt| holds(pt.lower_margin) && holds(pt.upper_margin)) {
        report.outcome = SandwichOutcome::Violated;
    }
    Ok(report)
}

/// One-dimensional parameter sets and bodies covering met, unmet and
/// refused hypotheses.
pub fn sandwich_test_matrix<T: Real>() -> Vec<(Body1d<T>, DeconvParams<T>)> {
    let params = [
        (1e-25, 2.0, 0.008, 5.0),
        (1e-24, 1.7, 0.005, 6.0),
        (1e-20, 0.5, 0.009, 3.0),
        (1e-30, 1.0, 0.002, 2.5),
    ];
    let mut out = Vec::new();
    for &(alpha, beta, epsilon, radius) in &params {
        let p = DeconvParams::new(1, T::lit(alpha), T::lit(beta), T::lit(epsilon), T::lit(radius))
            .expect("matrix parameters are positive");
        let bodies = [
            Body1d::Gaussian { variance: T::one() },
            Body1d::Gaussian {
                variance: T::one() - p.alpha,
            },
            Body1d::Gaussian { variance: T::lit(1.0005) },
            Body1d::Gaussian { variance: T::lit(0.9995) },
            Body1d::Gaussian { variance: T::lit(1.05) },
            Body1d::Uniform,
            Body1d::Laplace,
        ];
        out.extend(bodies.into_iter().map(|b| (b, p)));
    }
    let refused = DeconvParams::new(1, T::lit(1e-12), T::lit(0.5), T::lit(0.005), T::lit(3.0)).expect("positive");
    out.push((Body1d::Gaussian { variance: T::one() }, refused));
    out
}
