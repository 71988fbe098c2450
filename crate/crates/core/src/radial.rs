//! Radial statistics: histograms of `|X|`, thin-shell fractions and the
//! truncated moments `∫_U t^(-ℓ) g(t) dt` away from the shell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RadialDensity, RadialForm, Validate};
use crate::samplers::SampleBatch;
use crate::scalar::Real;
use crate::special::{chi_cdf, chi_sf};

/// Histogram of sample norms on `bin_count` equal bins spanning `[0, max |x_i|]`.
pub fn radial_histogram(batch: &SampleBatch, bin_count: usize) -> Result<RadialDensity<f64>> {
    histogram_of_norms(&batch.norms(), bin_count)
}

pub fn histogram_of_norms(norms: &[f64], bin_count: usize) -> Result<RadialDensity<f64>> {
    if norms.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if bin_count == 0 || norms.len() < 10 * bin_count {
        return Err(Error::invalid(format!(
            "need at least 10 samples per bin: {} samples, {} bins",
            norms.len(),
            bin_count
        )));
    }
    let max = norms.iter().fold(0.0f64, |a, b| a.max(*b));
    let hi = if max > 0.0 { max } else { 1.0 };
    let mut counts = vec![0u64; bin_count];
    for &r in norms {
        let idx = ((r / hi) * bin_count as f64) as usize;
        counts[idx.min(bin_count - 1)] += 1;
    }
    let total = norms.len() as f64;
    let edges = (0..=bin_count).map(|j| hi * j as f64 / bin_count as f64).collect();
    let mass = counts.iter().map(|&c| c as f64 / total).collect();
    RadialDensity::binned(edges, mass)
}

/// Bins the chi law with `dof` degrees of freedom on the given edges.
pub fn discretize_chi<T: Real>(dof: usize, edges: Vec<T>) -> Result<RadialDensity<T>> {
    if dof == 0 {
        return Err(Error::invalid("chi degrees of freedom must be >= 1"));
    }
    let mode = T::from_usize_lossy(dof).sqrt();
    let mass = edges
        .windows(2)
        .map(|w| {
            // difference on the side of the mode where it does not cancel
            if w[0] >= mode {
                chi_sf(dof, w[0]) - chi_sf(dof, w[1])
            } else {
                chi_cdf(dof, w[1]) - chi_cdf(dof, w[0])
            }
        })
        .collect();
    RadialDensity::binned(edges, mass)
}

/// Equal bins on `[0, √dof + 12]`, enough to hold all but `1e-6` of the mass.
pub fn chi_grid<T: Real>(dof: usize, bins: usize) -> Vec<T> {
    let hi = T::from_usize_lossy(dof).sqrt() + T::lit(12.0);
    (0..=bins)
        .map(|j| hi * T::from_usize_lossy(j) / T::from_usize_lossy(bins))
        .collect()
}

/// Fraction of samples outside the shell, with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellFraction {
    pub epsilon: f64,
    pub fraction: f64,
    pub stderr: f64,
}

/// Fraction of samples with `||x|/√n - 1| >= epsilon`.
pub fn thin_shell_fraction(batch: &SampleBatch, epsilon: f64) -> Result<ShellFraction> {
    shell_fraction_of_norms(&batch.norms(), batch.dimension, epsilon)
}

pub fn shell_fraction_of_norms(norms: &[f64], n: usize, epsilon: f64) -> Result<ShellFraction> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("shell epsilon must be positive, got {epsilon}")));
    }
    if norms.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let root_n = (n as f64).sqrt();
    let outside = norms.iter().filter(|&&r| (r / root_n - 1.0).abs() >= epsilon).count();
    let total = norms.len() as f64;
    let p = outside as f64 / total;
    Ok(ShellFraction {
        epsilon,
        fraction: p,
        stderr: (p * (1.0 - p) / total).sqrt(),
    })
}

/// `Σ_{midpoints in U} mid^(-ℓ) · mass`, split at `1/n²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMoment<T> {
    /// Bins with midpoint in `[0, 1/n²]`.
    pub near_origin: T,
    /// Remaining bins of `U`.
    pub off_shell: T,
    pub total: T,
}

/// Truncated moment over `U = {t < (1-ε)√n} ∪ {t > (1+ε)√n}` of a binned `g`.
pub fn truncated_moment<T: Real>(g: &RadialDensity<T>, l: usize, shell_epsilon: T, n: usize) -> Result<TruncatedMoment<T>> {
    g.check()?;
    if g.form != RadialForm::Binned {
        return Err(Error::Domain("truncated moment needs a binned density; discretize the chi form first".into()));
    }
    if !(shell_epsilon > T::zero()) || n == 0 {
        return Err(Error::Domain("need epsilon > 0 and n >= 1".into()));
    }
    let root_n = T::from_usize_lossy(n).sqrt();
    let lo = (T::one() - shell_epsilon) * root_n;
    let hi = (T::one() + shell_epsilon) * root_n;
    let split = T::from_usize_lossy(n).powi(2).recip();
    let lf = T::from_usize_lossy(l);
    let mut near = T::zero();
    let mut off = T::zero();
    for (mid, &m) in g.midpoints().zip(&g.mass) {
        if mid == T::zero() {
            return Err(Error::Domain("bin midpoint at the origin".into()));
        }
        if mid < lo || mid > hi {
            let term = m * mid.powf(-lf);
            if mid <= split {
                near = near + term;
            } else {
                off = off + term;
            }
        }
    }
    Ok(TruncatedMoment {
        near_origin: near,
        off_shell: off,
        total: near + off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BodyKind, BodySpec, GaussianSpec};
    use crate::samplers::{sample_body, sample_gaussian, SampleSource};

    #[test]
    fn sphere_samples_fill_one_bin() {
        let r0 = 2.5;
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let a = i as f64 * 0.1;
                vec![r0 * a.cos(), r0 * a.sin()]
            })
            .collect();
        let b = SampleBatch::from_rows(&rows, 0, SampleSource::External).unwrap();
        let g = radial_histogram(&b, 10).unwrap();
        let nonzero: Vec<usize> = (0..10).filter(|&j| g.mass[j] > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        let j = nonzero[0];
        assert!(g.edges[j] <= r0 && r0 <= g.edges[j + 1] + 1e-12);
    }

    #[test]
    fn gaussian_histogram_concentrates() {
        let n = 64;
        let b = sample_gaussian(&GaussianSpec::new(n, 1.0).unwrap(), 1_000_000, 12).unwrap();
        let g = radial_histogram(&b, 200).unwrap();
        let root = (n as f64).sqrt();
        let inside: f64 = g
            .midpoints()
            .zip(&g.mass)
            .filter(|(m, _)| (m / root - 1.0).abs() <= 0.3)
            .map(|(_, w)| w)
            .sum();
        assert!(inside > 0.99, "{inside}");
    }

    #[test]
    fn histogram_mass_is_partition() {
        let b = sample_body(&BodySpec::new(BodyKind::Ball, 5).unwrap(), 10_000, 1).unwrap();
        for bins in [50usize, 100, 200] {
            let g = radial_histogram(&b, bins).unwrap();
            let counts: u64 = g.mass.iter().map(|m| (m * 10_000.0).round() as u64).sum();
            assert_eq!(counts, 10_000);
            assert!((g.total_mass() - 1.0).abs() < 1e-12);
        }
        assert!(radial_histogram(&b, 2_000).is_err());
        assert!(matches!(histogram_of_norms(&[], 1), Err(Error::EmptyBatch)));
    }

    #[test]
    fn thin_shell_examples() {
        for kind in BodyKind::ALL {
            let b = sample_body(&BodySpec::new(kind, 2).unwrap(), 100_000, 3).unwrap();
            assert_eq!(thin_shell_fraction(&b, 10.0).unwrap().fraction, 0.0, "{kind}");
        }
        let g = sample_gaussian(&GaussianSpec::new(100, 1.0).unwrap(), 200_000, 4).unwrap();
        assert!(thin_shell_fraction(&g, 0.3).unwrap().fraction <= 0.01);
        assert!(thin_shell_fraction(&g, 0.0).is_err());
    }

    #[test]
    fn shell_fraction_monotone_in_epsilon() {
        let b = sample_body(&BodySpec::new(BodyKind::ProductLaplace, 30).unwrap(), 20_000, 3).unwrap();
        let mut prev = 1.0;
        for k in 1..40 {
            let f = thin_shell_fraction(&b, 0.01 * k as f64).unwrap().fraction;
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn truncated_moment_examples() {
        // all mass in the shell
        let g = RadialDensity::binned(vec![9.9, 10.1], vec![1.0]).unwrap();
        assert_eq!(truncated_moment(&g, 2, 0.1, 100).unwrap().total, 0.0);

        // discretized chi(64), ℓ = 2, ε = 0.5
        let g = discretize_chi(64, chi_grid::<f64>(64, 400)).unwrap();
        assert!(g.total_mass() > 1.0 - 1e-6);
        assert!(truncated_moment(&g, 2, 0.5, 64).unwrap().total <= 1e-6);

        // single off-shell bin at 0.5√n
        let n = 100;
        let t = 0.5 * (n as f64).sqrt();
        let g = RadialDensity::binned(vec![t - 0.01, t + 0.01, 9.5, 10.5], vec![1e-3, 0.0, 1.0 - 1e-3]).unwrap();
        let tm = truncated_moment(&g, 1, 0.1, n).unwrap();
        assert!((tm.total * t / 1e-3 - 1.0).abs() < 1e-12);
        assert_eq!(tm.near_origin, 0.0);
    }

    #[test]
    fn truncated_moment_splits_near_origin() {
        let n = 10;
        let g = RadialDensity::binned(vec![0.0f64, 0.001, 1.0, 5.0], vec![1e-6, 0.1, 0.9 - 1e-6]).unwrap();
        let tm = truncated_moment(&g, 1, 0.2, n).unwrap();
        assert!((tm.near_origin - 1e-6 / 0.0005).abs() < 1e-12);
        assert!(tm.off_shell > 0.0);
        assert!(truncated_moment(&RadialDensity::<f64>::chi(3).unwrap(), 1, 0.1, 3).is_err());
    }

    #[test]
    fn zeroth_moment_matches_shell_fraction() {
        let n = 50;
        let b = sample_body(&BodySpec::new(BodyKind::Cube, n).unwrap(), 100_000, 8).unwrap();
        let g = radial_histogram(&b, 400).unwrap();
        let eps = 0.08;
        let tm = truncated_moment(&g, 0, eps, n).unwrap().total;
        let frac = thin_shell_fraction(&b, eps).unwrap().fraction;
        // discrepancy is confined to the two bins straddling the shell boundary
        let root = (n as f64).sqrt();
        let boundary: f64 = g
            .edges
            .windows(2)
            .zip(&g.mass)
            .filter(|(w, _)| {
                let (a, c) = (w[0], w[1]);
                (a <= (1.0 - eps) * root && (1.0 - eps) * root <= c) || (a <= (1.0 + eps) * root && (1.0 + eps) * root <= c)
            })
            .map(|(_, m)| m)
            .sum();
        assert!((tm - frac).abs() <= boundary + 1e-12, "{tm} {frac} {boundary}");
    }
}
