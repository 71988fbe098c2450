//! Kernel density estimates of projected samples and their ratio to the
//! gaussian density.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::random_subspace;
use crate::model::{BodySpec, ConvolutionSchedule, DensityEstimate, RatioReport, SubspaceBasis, Validate};
use crate::rng::{derive_seed, Purpose};
use crate::samplers::{NoiseStep, Pipeline, SampleBatch};
use crate::spherical::gaussian_density;

/// Largest marginal dimension handled by the estimator.
pub const MAX_KDE_DIM: usize = 3;
pub const MIN_KDE_SAMPLES: usize = 10_000;
/// Kernel contributions beyond this many bandwidths are dropped (`e^-32`).
pub const KERNEL_CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Bandwidth {
    /// `σ̂ · N^(-1/(ℓ+4))`, with `σ̂²` the mean coordinate variance.
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvalGrid {
    Points { points: Vec<Vec<f64>> },
    /// Every radius along `directions` fixed unit vectors.
    Radial { radii: Vec<f64>, directions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub grid: EvalGrid,
}

impl Validate for KdeConfig {
    fn check(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("fixed bandwidth must be positive, got {h}")));
            }
        }
        if let EvalGrid::Radial { radii, directions } = &self.grid {
            if *directions == 0 || radii.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::invalid("radial grid needs nonnegative radii and >= 1 direction"));
            }
        }
        Ok(())
    }
}

/// Deterministic unit vectors in `R^l`: `±e1` for `l = 1`, equally spaced
/// angles for `l = 2`, a Fibonacci lattice for `l = 3`.
pub fn directions(l: usize, count: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::{PI, TAU};
    match l {
        1 => [vec![1.0], vec![-1.0]].into_iter().take(count.clamp(1, 2)).collect(),
        2 => (0..count)
            .map(|k| {
                let a = TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![rho * a.cos(), rho * a.sin(), z]
                })
                .collect()
        }
    }
}

impl EvalGrid {
    pub fn points(&self, l: usize) -> Vec<Vec<f64>> {
        match self {
            EvalGrid::Points { points } => points.clone(),
            EvalGrid::Radial { radii, directions: count } => {
                let dirs = directions(l, *count);
                radii
                    .iter()
                    .flat_map(|&r| dirs.iter().map(move |d| d.iter().map(|c| c * r).collect()))
                    .collect()
            }
        }
    }

    /// Equispaced points on `[-max_radius, max_radius]` in one dimension.
    pub fn line(max_radius: f64, step: f64) -> Self {
        let k = (max_radius / step).round() as i64;
        EvalGrid::Points {
            points: (-k..=k).map(|i| vec![i as f64 * step]).collect(),
        }
    }
}

pub fn scott_bandwidth(batch: &SampleBatch) -> f64 {
    let cov = batch.moments().covariance();
    let l = batch.dimension;
    let sigma = ((0..l).map(|i| cov[(i, i)]).sum::<f64>() / l as f64).sqrt();
    sigma * (batch.count as f64).powf(-1.0 / (l as f64 + 4.0))
}

/// Gaussian-kernel density estimate at the grid points, with the standard
/// error of the mean kernel weight at each point.
pub fn estimate_density(projected: &SampleBatch, config: &KdeConfig) -> Result<DensityEstimate> {
    projected.check()?;
    config.check()?;
    let l = projected.dimension;
    if l > MAX_KDE_DIM {
        return Err(Error::DimensionTooHigh(l));
    }
    if projected.count < MIN_KDE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KDE_SAMPLES,
            got: projected.count,
        });
    }
    let h = match config.bandwidth {
        Bandwidth::Scott => scott_bandwidth(projected),
        Bandwidth::Fixed(h) => h,
    };
    let points = config.grid.points(l);
    if points.iter().any(|p| p.len() != l) {
        return Err(Error::Dimension(format!("evaluation points must have dimension {l}")));
    }

    // Samples sorted by first coordinate; each point scans only its window.
    let mut sorted: Vec<&[f64]> = projected.rows().collect();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let first: Vec<f64> = sorted.iter().map(|r| r[0]).collect();

    let n = projected.count as f64;
    let reach = KERNEL_CUTOFF * h;
    let reach_sq = reach * reach;
    let inv_two_h2 = 0.5 / (h * h);
    let norm = (std::f64::consts::TAU * h * h).powf(-(l as f64) / 2.0);

    let (values, stderr): (Vec<f64>, Vec<f64>) = points
        .par_iter()
        .map(|p| {
            let lo = first.partition_point(|&x| x < p[0] - reach);
            let hi = first.partition_point(|&x| x <= p[0] + reach);
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for row in &sorted[lo..hi] {
                let d2: f64 = row.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= reach_sq {
                    let k = (-d2 * inv_two_h2).exp();
                    s1 += k;
                    s2 += k * k;
                }
            }
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0);
            (norm * mean, norm * (var / n).sqrt())
        })
        .unzip();

    DensityEstimate {
        points,
        values,
        stderr,
        sample_count: projected.count,
        bandwidth: h,
    }
    .validate()
}

/// Per-point `f̂/γ_ℓ[v]` for points with `|x| <= max_radius`.
pub fn ratio_to_gaussian(estimate: &DensityEstimate, v: f64, max_radius: f64) -> RatioReport<f64> {
    let l = estimate.dimension();
    let (radii, ratios): (Vec<f64>, Vec<f64>) = estimate
        .points
        .iter()
        .zip(&estimate.values)
        .filter_map(|(p, f)| {
            let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            (r <= max_radius + 1e-12).then(|| (r, f / gaussian_density(l, v, r)))
        })
        .unzip();
    RatioReport::from_ratios(radii, ratios)
}

/// One projected-density experiment: a body, optional noise, one subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioExperiment {
    pub body: BodySpec,
    pub subspace_dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_radius: f64,
    pub grid_step: f64,
    pub directions: usize,
    /// Convolve with `γ_n[n^(-αλ)]` noise for this `α`.
    pub convolve_alpha: Option<f64>,
    /// Divide by `√(1 + v)` after convolving and compare against `γ_ℓ[1]`
    /// instead of `γ_ℓ[1 + v]`.
    pub rescale: bool,
    pub bandwidth: Bandwidth,
}

impl RatioExperiment {
    pub fn new(body: BodySpec, subspace_dim: usize, samples: usize, seed: u64) -> Self {
        Self {
            body,
            subspace_dim,
            samples,
            seed,
            max_radius: 2.0,
            grid_step: 0.1,
            directions: 8,
            convolve_alpha: None,
            rescale: false,
            bandwidth: Bandwidth::Scott,
        }
    }

    pub fn grid(&self) -> EvalGrid {
        if self.subspace_dim == 1 {
            EvalGrid::line(self.max_radius, self.grid_step)
        } else {
            let k = (self.max_radius / self.grid_step).round() as usize;
            EvalGrid::Radial {
                radii: (0..=k).map(|i| i as f64 * self.grid_step).collect(),
                directions: self.directions,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioOutcome {
    pub report: RatioReport<f64>,
    pub estimate: DensityEstimate,
    /// Variance of the gaussian the estimate is compared against.
    pub reference_variance: f64,
    pub basis: SubspaceBasis,
}

fn noise_for(body: &BodySpec, alpha: Option<f64>, rescale: bool, seed: u64) -> Result<(Option<NoiseStep>, f64)> {
    match alpha {
        None => Ok((None, 1.0)),
        Some(a) => {
            let schedule = ConvolutionSchedule::new(a, body.dimension)?;
            let step = NoiseStep::from_schedule(&schedule, rescale, seed);
            let reference = if rescale { 1.0 } else { 1.0 + schedule.noise_variance };
            Ok((Some(step), reference))
        }
    }
}

pub fn run_ratio_experiment(exp: &RatioExperiment) -> Result<RatioOutcome> {
    exp.body.check()?;
    let basis = random_subspace(exp.body.dimension, exp.subspace_dim, derive_seed(exp.seed, Purpose::Experiment, 0))?;
    let (noise, reference_variance) = noise_for(&exp.body, exp.convolve_alpha, exp.rescale, derive_seed(exp.seed, Purpose::Noise, 0))?;
    let mut pipeline = Pipeline::new(exp.body, exp.samples, exp.seed).with_basis(&basis);
    if let Some(step) = noise {
        pipeline = pipeline.with_noise(step);
    }
    let projected = pipeline.collect()?;
    let estimate = estimate_density(
        &projected,
        &KdeConfig {
            bandwidth: exp.bandwidth,
            grid: exp.grid(),
        },
    )?;
    let report = ratio_to_gaussian(&estimate, reference_variance, exp.max_radius);
    Ok(RatioOutcome {
        report,
        estimate,
        reference_variance,
        basis,
    })
}

/// Parameters of the subspace-averaged radial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTildeConfig {
    pub body: BodySpec,
    pub schedule_alpha: Option<f64>,
    pub subspace_dim: usize,
    pub radii: Vec<f64>,
    pub subspace_count: usize,
    pub samples_per_subspace: usize,
    pub directions: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTildeProfile {
    pub radii: Vec<f64>,
    /// Mean over subspaces of the direction-averaged estimate, over `γ_ℓ[1 + v]`.
    pub ratios: Vec<f64>,
    /// The same ratio for each subspace separately.
    pub per_subspace: Vec<Vec<f64>>,
    /// `max |ratio - 1|` of the averaged profile.
    pub sup_abs_deviation: f64,
    /// `max |ratio - 1|` over every individual subspace.
    pub worst_subspace_deviation: f64,
    pub noise_variance: f64,
    pub bandwidths: Vec<f64>,
}

/// Radial profile of the projected density averaged over random subspaces,
/// relative to `γ_ℓ[1 + v]` (`v = 0` without a schedule).
pub fn m_tilde_profile(cfg: &MTildeConfig) -> Result<MTildeProfile> {
    cfg.body.check()?;
    if cfg.subspace_count == 0 || cfg.radii.is_empty() {
        return Err(Error::invalid("need at least one subspace and one radius"));
    }
    let l = cfg.subspace_dim;
    if l > MAX_KDE_DIM {
        return Err(Error::DimensionTooHigh(l));
    }
    let n = cfg.body.dimension;
    let variance = match cfg.schedule_alpha {
        Some(a) => ConvolutionSchedule::new(a, n)?.noise_variance,
        None => 0.0,
    };
    let grid = EvalGrid::Radial {
        radii: cfg.radii.clone(),
        directions: cfg.directions,
    };
    let dir_count = directions(l, cfg.directions).len();
    let reference: Vec<f64> = cfg.radii.iter().map(|&t| gaussian_density(l, 1.0 + variance, t)).collect();

    let mut per_subspace = Vec::with_capacity(cfg.subspace_count);
    let mut bandwidths = Vec::with_capacity(cfg.subspace_count);
    for s in 0..cfg.subspace_count as u64 {
        let basis = random_subspace(n, l, derive_seed(cfg.seed, Purpose::Experiment, 2 * s))?;
        let mut pipeline = Pipeline::new(cfg.body, cfg.samples_per_subspace, derive_seed(cfg.seed, Purpose::Experiment, 2 * s + 1))
            .with_basis(&basis);
        if variance > 0.0 {
            pipeline = pipeline.with_noise(NoiseStep {
                variance,
                rescale: false,
                seed: derive_seed(cfg.seed, Purpose::Noise, s),
            });
        }
        let est = estimate_density(
            &pipeline.collect()?,
            &KdeConfig {
                bandwidth: cfg.bandwidth,
                grid: grid.clone(),
            },
        )?;
        let ratios: Vec<f64> = est
            .values
            .chunks(dir_count)
            .zip(&reference)
            .map(|(vals, g)| vals.iter().sum::<f64>() / dir_count as f64 / g)
            .collect();
        per_subspace.push(ratios);
        bandwidths.push(est.bandwidth);
    }
    let k = cfg.subspace_count as f64;
    let ratios: Vec<f64> = (0..cfg.radii.len())
        .map(|i| per_subspace.iter().map(|r| r[i]).sum::<f64>() / k)
        .collect();
    let dev = |r: &[f64]| r.iter().fold(0.0f64, |a, x| a.max((x - 1.0).abs()));
    Ok(MTildeProfile {
        radii: cfg.radii.clone(),
        sup_abs_deviation: dev(&ratios),
        worst_subspace_deviation: per_subspace.iter().map(|r| dev(r)).fold(0.0, f64::max),
        ratios,
        per_subspace,
        noise_variance: variance,
        bandwidths,
    })
}
