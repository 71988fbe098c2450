//! Acceptance criteria, each a self-contained check with a pass/fail verdict.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::deconvolution::{
    check_conditions, grid_convolve, sandwich_test_matrix, verify_sandwich, DeconvParams, Grid1d, GridDensity, SandwichOutcome,
};
use crate::density::{m_tilde_profile, run_ratio_experiment, Bandwidth, MTildeConfig, RatioExperiment};
use crate::error::Result;
use crate::model::{BodyKind, BodySpec, RadialDensity};
use crate::radial::shell_fraction_of_norms;
use crate::samplers::Pipeline;
use crate::special::{chi_cdf, chi_sf};
use crate::spherical::{gaussian_density, kernel_mass, psi, psi_gaussian_ratio_scan, radial_mixture_marginal, KernelParams};

/// `Desk` runs every criterion at its stated sample sizes; `Quick` shrinks
/// the Monte Carlo criteria for smoke testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Quick,
}

impl Profile {
    fn samples(self, desk: usize) -> usize {
        match self {
            Profile::Desk => desk,
            Profile::Quick => (desk / 20).max(20_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "gaussian fixed point"),
    (2, "archimedes case"),
    (3, "kernel normalization"),
    (4, "gaussian-limit rate"),
    (5, "isotropy"),
    (6, "thin-shell trend"),
    (7, "desk-scale pointwise clt"),
    (8, "convolution identity"),
    (9, "certificate arithmetic"),
    (10, "sandwich verification"),
    (11, "determinism"),
];

type Verdict = Result<(bool, String)>;

pub fn run_criterion(id: u8, profile: Profile) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map_or("unknown criterion", |(_, n)| n)
        .to_string();
    let start = Instant::now();
    let verdict = match id {
        1 => gaussian_fixed_point(),
        2 => archimedes(),
        3 => kernel_normalization(),
        4 => gaussian_limit_rate(),
        5 => isotropy(profile),
        6 => thin_shell_trend(profile),
        7 => pointwise_clt(profile),
        8 => convolution_identity(),
        9 => certificate_arithmetic(),
        10 => sandwich(),
        11 => determinism(profile),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(profile: Profile, only: Option<&[u8]>) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| only.is_none_or(|o| o.contains(id)))
        .map(|id| run_criterion(id, profile))
        .collect()
}

pub fn format_line(r: &CriterionResult) -> String {
    format!(
        "[{}] {:>2} {:<26} {:>8.2}s  {}",
        if r.passed { "PASS" } else { "FAIL" },
        r.id,
        r.name,
        r.seconds,
        r.detail
    )
}

pub fn format_table(results: &[CriterionResult]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(s, "{}", format_line(r));
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let _ = writeln!(s, "{passed}/{} criteria passed", results.len());
    s
}

fn gaussian_fixed_point() -> Verdict {
    let mut worst = 0.0f64;
    for n in [16usize, 64, 256] {
        let g = RadialDensity::chi(n)?;
        for l in 1..=3 {
            for k in 0..=30 {
                let t = 0.1 * k as f64;
                let got = radial_mixture_marginal(&g, n, l, t)?;
                worst = worst.max((got / gaussian_density(l, 1.0, t) - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-3, format!("max relative error {worst:.2e} (tol 1e-3)")))
}

fn archimedes() -> Verdict {
    let p = KernelParams::new(3, 1, 1.0)?;
    let mut worst = 0.0f64;
    for k in 0..1000 {
        worst = worst.max((psi(&p, k as f64 / 1000.0)? - 0.5).abs());
    }
    Ok((worst <= 1e-12, format!("max |ψ - 1/2| = {worst:.2e} on [0, 1) (tol 1e-12)")))
}

fn kernel_normalization() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in [2usize, 3, 4, 5, 6, 7, 8, 10, 16, 25, 50, 100, 150, 200] {
        for l in 1..=5.min(n - 1) {
            for r in [0.5, 1.0, (n as f64).sqrt(), 7.0] {
                let m = kernel_mass(&KernelParams::new(n, l, r)?)?;
                worst = worst.max((m - 1.0).abs());
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-6, format!("{count} kernels, max |mass - 1| = {worst:.2e} (tol 1e-6)")))
}

fn gaussian_limit_rate() -> Verdict {
    let ns = [100usize, 400, 1600];
    let mut sups = Vec::new();
    for &n in &ns {
        let t_max = (n as f64).powf(0.125) * (1.0 - 1e-9);
        sups.push(psi_gaussian_ratio_scan(n, 1, t_max, 4001)?.sup_abs_deviation);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let passed = (slope + 0.5).abs() <= 0.15;
    Ok((
        passed,
        format!(
            "sup = {:.3e}, {:.3e}, {:.3e}; log-log slope {slope:.3} (want -0.5 ± 0.15)",
            sups[0], sups[1], sups[2]
        ),
    ))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn isotropy(profile: Profile) -> Verdict {
    let count = profile.samples(1_000_000);
    let (mut worst_mean, mut worst_cov) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for kind in BodyKind::ALL {
        for n in [2usize, 10, 50] {
            let m = Pipeline::new(BodySpec::new(kind, n)?, count, 1000 + n as u64).moments()?;
            let (mean_dev, cov_dev) = m.isotropy_deviation();
            worst_mean = worst_mean.max(mean_dev);
            worst_cov = worst_cov.max(cov_dev);
            if mean_dev > 0.01 || cov_dev > 0.02 {
                failures.push(format!("{kind}/n={n}"));
            }
        }
    }
    Ok((
        failures.is_empty(),
        format!(
            "N={count}: max mean dev {worst_mean:.4} (tol 0.01), max cov dev {worst_cov:.4} (tol 0.02){}",
            if failures.is_empty() { String::new() } else { format!("; failing {}", failures.join(" ")) }
        ),
    ))
}

fn thin_shell_trend(profile: Profile) -> Verdict {
    let count = profile.samples(1_000_000);
    let cube_fraction = |n: usize| -> Result<(f64, f64)> {
        let eps = (n as f64).powf(-1.0 / 15.0);
        let norms = Pipeline::new(BodySpec::new(BodyKind::Cube, n)?, count, 600 + n as u64).norms()?;
        Ok((eps, shell_fraction_of_norms(&norms, n, eps)?.fraction))
    };
    let (e100, f100) = cube_fraction(100)?;
    let (e400, f400) = cube_fraction(400)?;
    let trend = f400 < f100;

    let mut worst = 0.0f64;
    for n in [100usize, 400] {
        let norms = Pipeline::new(BodySpec::new(BodyKind::StandardGaussian, n)?, count, 700 + n as u64).norms()?;
        let root = (n as f64).sqrt();
        for eps in [(n as f64).powf(-1.0 / 15.0), 0.1, 0.05, 0.02] {
            let got = shell_fraction_of_norms(&norms, n, eps)?.fraction;
            let want = chi_cdf(n, (1.0 - eps) * root) + chi_sf(n, (1.0 + eps) * root);
            worst = worst.max((got - want).abs());
        }
    }
    let oracle = worst <= 0.005;
    Ok((
        trend && oracle,
        format!(
            "cube N={count}: fraction {f100:.3e} at n=100 (eps {e100:.3}) vs {f400:.3e} at n=400 (eps {e400:.3}), strict decrease {}; \
             gaussian max |fraction - chi oracle| {worst:.4} (tol 0.005)",
            if trend { "holds" } else { "fails" }
        ),
    ))
}

fn pointwise_clt(profile: Profile) -> Verdict {
    let n = 300;
    let count = profile.samples(1_000_000);
    let per_subspace = profile.samples(200_000);
    let subspaces = match profile {
        Profile::Desk => 32,
        Profile::Quick => 4,
    };
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, seed) in [(BodyKind::Cube, 71u64), (BodyKind::Simplex, 72)] {
        let body = BodySpec::new(kind, n)?;
        let line = run_ratio_experiment(&RatioExperiment::new(body, 1, count, seed))?;
        let profile = m_tilde_profile(&MTildeConfig {
            body,
            schedule_alpha: None,
            subspace_dim: 2,
            radii: (0..=20).map(|i| 0.1 * i as f64).collect(),
            subspace_count: subspaces,
            samples_per_subspace: per_subspace,
            directions: 8,
            seed: seed + 100,
            bandwidth: Bandwidth::Scott,
        })?;
        let d1 = line.report.sup_abs_deviation;
        let d2 = profile.sup_abs_deviation;
        passed &= d1 <= 0.05 && d2 <= 0.05;
        parts.push(format!("{kind}: l=1 sup {d1:.4}, l=2 profile sup {d2:.4}"));
    }
    Ok((
        passed,
        format!("n=300, N={count}, {subspaces}x{per_subspace} for l=2; {} (tol 0.05)", parts.join("; ")),
    ))
}

fn convolution_identity() -> Verdict {
    let sample = |variance: f64, step: f64| {
        let points = (24.0 / step).round() as usize + 1;
        GridDensity::OneD(Grid1d::sample(-12.0, 12.0, points, |x| gaussian_density(1, variance, x.abs())))
    };
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let mut identity = 0.0f64;
    for &(a, b) in &[(1.0, 0.25), (0.5, 0.5), (1.0, 0.04), (2.0, 1.0)] {
        let grid = sample(a, f64::sqrt(b) / 4.0);
        let out = grid_convolve(&grid, b)?;
        let want = sample(a + b, f64::sqrt(b) / 4.0);
        identity = identity.max(sup(out.values(), want.values()));
    }
    let grid = sample(1.0, 0.05);
    let twice = grid_convolve(&grid_convolve(&grid, 0.1)?, 0.2)?;
    let once = grid_convolve(&grid, 0.3)?;
    let additivity = sup(twice.values(), once.values());
    Ok((
        identity <= 1e-6 && additivity <= 2e-6,
        format!("identity sup error {identity:.2e} (tol 1e-6), additivity {additivity:.2e} (tol 2e-6)"),
    ))
}

fn certificate_arithmetic() -> Verdict {
    let c1 = check_conditions(&DeconvParams::new(2, 1e-12, 0.5, 0.005, 10.0)?);
    let c2 = check_conditions(&DeconvParams::new(2, 1e-24, 0.5, 0.005, 10.0)?);
    let c3 = check_conditions(&DeconvParams::new(8, 1e-30, 0.5, 0.001, 10.0)?);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15;
    let passed = !c1.admissible
        && c2.admissible
        && c3.admissible
        && c3.lower_radius == 4.0
        && c3.upper_radius == 1.0
        && close(c3.lower_factor, 0.994)
        && close(c3.upper_factor, 1.008);
    Ok((
        passed,
        format!(
            "admissible: {}, {}, {}; radii {} and {}; factors {} and {}",
            c1.admissible, c2.admissible, c3.admissible, c3.lower_radius, c3.upper_radius, c3.lower_factor, c3.upper_factor
        ),
    ))
}

fn sandwich() -> Verdict {
    let (mut verified, mut violated, mut unmet, mut refused) = (0, 0, 0, 0);
    let mut min_margin = f64::INFINITY;
    for (body, p) in sandwich_test_matrix::<f64>() {
        let rep = verify_sandwich(body, &p, 4001)?;
        match rep.outcome {
            SandwichOutcome::Verified => verified += 1,
            SandwichOutcome::Violated => violated += 1,
            SandwichOutcome::HypothesisNotMet { .. } => unmet += 1,
            SandwichOutcome::Refused { .. } => refused += 1,
        }
        for m in [rep.min_lower_margin(), rep.min_upper_margin()].into_iter().flatten() {
            min_margin = min_margin.min(m);
        }
    }
    Ok((
        violated == 0 && verified > 0,
        format!(
            "{verified} verified, {violated} violated, {unmet} hypothesis not met, {refused} refused; min margin {min_margin:.3e}"
        ),
    ))
}

fn scratch_dir() -> Result<PathBuf> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    let dir = std::env::temp_dir().join(format!("clt-lab-{}-{nanos}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| crate::Error::io(&dir, e))?;
    Ok(dir)
}

fn determinism(profile: Profile) -> Verdict {
    let dir = scratch_dir()?;
    let samples = profile.samples(1_000_000).to_string();
    let small = profile.samples(100_000).to_string();
    let runs: Vec<(&str, Vec<&str>, &str)> = vec![
        ("ratio", vec!["ratio", "--body", "cube", "--n", "300", "--l", "1", "--samples", &samples, "--seed", "7"], "json"),
        (
            "ratio-l2",
            vec!["ratio", "--body", "simplex", "--n", "40", "--l", "2", "--samples", &small, "--seed", "8", "--convolve", "10"],
            "csv",
        ),
        ("thinshell", vec!["thinshell", "--body", "product_laplace", "--n", "50", "--samples", &small, "--seed", "9", "--epsilon", "0.05,0.1"], "csv"),
        ("sample", vec!["sample", "--body", "ball", "--n", "5", "--samples", "20000", "--seed", "10", "--convolve", "10", "--rescale"], "bin"),
        (
            "mtilde",
            vec!["mtilde", "--body", "cube", "--n", "30", "--subspaces", "2", "--samples", "20000", "--seed", "11", "--alpha", "10"],
            "json",
        ),
    ];
    let mut mismatched = Vec::new();
    for (label, argv, format) in &runs {
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "2", "1"].iter().enumerate() {
            let path = dir.join(format!("{label}-{k}.{format}"));
            let path_str = path.to_string_lossy().into_owned();
            let mut full = vec!["clt-lab", "--threads", threads, "--format", format, "--out", &path_str];
            full.extend(argv.iter().copied());
            let code = crate::cli::run(full);
            if code != 0 {
                mismatched.push(format!("{label} exited {code}"));
                continue;
            }
            let mut bytes = std::fs::read(&path).map_err(|e| crate::Error::io(&path, e))?;
            if *format == "bin" {
                let side = crate::samplers::sidecar_path(&path);
                bytes.extend(std::fs::read(&side).map_err(|e| crate::Error::io(&side, e))?);
            }
            outputs.push(bytes);
        }
        if outputs.len() != 3 || outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(label.to_string());
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok((
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} subcommand runs byte-identical across --threads 1, 2, 1", runs.len())
        } else {
            format!("mismatch: {}", mismatched.join(", "))
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_criteria_pass() {
        for id in [1u8, 2, 3, 8, 9, 10] {
            let r = run_criterion(id, Profile::Quick);
            assert!(r.passed, "{}", format_line(&r));
        }
    }

    #[test]
    fn slope_of_exact_power() {
        let xs = [1.0f64, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        assert!((least_squares_slope(&xs, &ys) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn table_lists_every_result() {
        let results = run_suite(Profile::Quick, Some(&[2, 9]));
        let table = format_table(&results);
        assert_eq!(results.len(), 2);
        assert!(table.contains("archimedes case") && table.contains("2/2 criteria passed"));
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run_criterion(42, Profile::Quick).passed);
    }
}
