use clt_lab::deconvolution::{grid_convolve, Grid1d, GridDensity};
use clt_lab::density::{run_ratio_experiment, RatioExperiment};
use clt_lab::grassmann::{project_rows, random_subspace};
use clt_lab::model::{BodyKind, BodySpec, ConvolutionSchedule, GaussianSpec};
use clt_lab::radial::thin_shell_fraction;
use clt_lab::samplers::{sample_body, sample_gaussian, NoiseStep, Pipeline};
use clt_lab::special::chi_cdf;
use clt_lab::spherical::{gaussian_density, ln_psi, KernelParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_alpha_ten_is_seventh_root(n in 1usize..100_000) {
        let s = ConvolutionSchedule::new(10.0f64, n).unwrap();
        let direct = (n as f64).powf(-1.0 / 7.0);
        prop_assert!((s.noise_variance - direct).abs() <= 1e-15 * direct);
    }

    #[test]
    fn projection_never_lengthens(n in 2usize..40, l in 1usize..4, seed in any::<u64>()) {
        let l = l.min(n);
        let basis = random_subspace(n, l, seed).unwrap();
        prop_assert!(basis.gram_deviation() <= 1e-10);
        let x = sample_body(&BodySpec::new(BodyKind::ProductLaplace, n).unwrap(), 200, seed).unwrap();
        let y = project_rows(&basis, &x.data);
        for (xr, yr) in x.data.chunks(n).zip(y.chunks(l)) {
            let nx = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = yr.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(ny <= nx + 1e-12);
        }
    }

    #[test]
    fn kernel_scaling_identity(n in 2usize..400, l in 1usize..6, r in 0.01f64..50.0, s in 0.0f64..1.0) {
        prop_assume!(l < n);
        let t = s * r;
        let lhs = ln_psi(&KernelParams::new(n, l, r).unwrap(), t).unwrap();
        let rhs = -(l as f64) * r.ln() + ln_psi(&KernelParams::new(n, l, 1.0).unwrap(), t / r).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn thin_shell_monotone_in_epsilon(kind in prop::sample::select(BodyKind::ALL.to_vec()), n in 1usize..60, seed in any::<u64>()) {
        let b = sample_body(&BodySpec::new(kind, n).unwrap(), 2_000, seed).unwrap();
        let mut prev = 1.0;
        for k in 1..30 {
            let f = thin_shell_fraction(&b, 0.03 * k as f64).unwrap().fraction;
            prop_assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn grid_convolution_preserves_mass(a in 0.3f64..2.0, b in 0.01f64..1.0) {
        let step = b.sqrt() / 2.0;
        let points = (30.0 / step).ceil() as usize + 1;
        let grid = GridDensity::OneD(Grid1d::sample(-15.0, 15.0, points, |x| gaussian_density(1, a, x.abs())));
        prop_assume!((grid.mass() - 1.0).abs() <= 1e-6);
        let out = grid_convolve(&grid, b).unwrap();
        prop_assert!((out.mass() - 1.0).abs() <= 1e-6);
        prop_assert!(out.values().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn rescaled_convolution_preserves_isotropy() {
    let s = ConvolutionSchedule::new(10.0, 10).unwrap();
    for kind in BodyKind::ALL {
        let m = Pipeline::new(BodySpec::new(kind, 10).unwrap(), 1_000_000, 31)
            .with_noise(NoiseStep::from_schedule(&s, true, 32))
            .moments()
            .unwrap();
        let (mean_dev, cov_dev) = m.isotropy_deviation();
        assert!(mean_dev <= 0.01 && cov_dev <= 0.02, "{kind}: {mean_dev} {cov_dev}");
    }
}

#[test]
fn squared_norm_over_n_is_one() {
    for kind in BodyKind::ALL {
        for n in [100usize, 200, 400] {
            let norms = Pipeline::new(BodySpec::new(kind, n).unwrap(), 1_000_000, 40 + n as u64).norms().unwrap();
            let mean = norms.iter().map(|r| r * r).sum::<f64>() / norms.len() as f64 / n as f64;
            assert!((mean - 1.0).abs() <= 0.01, "{kind} n={n}: {mean}");
        }
    }
}

#[test]
fn one_dimensional_marginals_are_unimodal() {
    let n = 10;
    for kind in BodyKind::ALL {
        let basis = random_subspace(n, 1, 5).unwrap();
        let x = Pipeline::new(BodySpec::new(kind, n).unwrap(), 1_000_000, 6)
            .with_basis(&basis)
            .collect()
            .unwrap();
        let mut counts = [0f64; 64];
        for v in &x.data {
            if v.abs() < 4.0 {
                counts[((v + 4.0) / 0.125) as usize] += 1.0;
            }
        }
        let smooth: Vec<f64> = counts.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        let peak = smooth.iter().enumerate().fold(0, |best, (i, v)| if *v > smooth[best] { i } else { best });
        assert!(smooth[..=peak].windows(2).all(|w| w[0] <= w[1]), "{kind} rises non-monotonically");
        assert!(smooth[peak..].windows(2).all(|w| w[0] >= w[1]), "{kind} falls non-monotonically");
    }
}

#[test]
fn projected_gaussian_norm_is_chi() {
    let n = 30;
    for l in 1..=3 {
        let g = sample_gaussian(&GaussianSpec::new(n, 1.0).unwrap(), 100_000, 50 + l as u64).unwrap();
        let basis = random_subspace(n, l, 60 + l as u64).unwrap();
        let y = project_rows(&basis, &g.data);
        let mut norms: Vec<f64> = y.chunks(l).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        norms.sort_by(f64::total_cmp);
        let m = norms.len() as f64;
        let ks = norms
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let c = chi_cdf(l, r);
                (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.01, "l={l}: KS {ks}");
    }
}

#[test]
fn smoothing_never_hurts_beyond_tolerance() {
    for kind in BodyKind::ALL {
        let body = BodySpec::new(kind, 100).unwrap();
        let raw = run_ratio_experiment(&RatioExperiment::new(body, 1, 1_000_000, 80)).unwrap();
        let mut exp = RatioExperiment::new(body, 1, 1_000_000, 80);
        exp.convolve_alpha = Some(10.0);
        exp.rescale = true;
        let smoothed = run_ratio_experiment(&exp).unwrap();
        let (d_raw, d_z) = (raw.report.sup_abs_deviation, smoothed.report.sup_abs_deviation);
        assert!(d_z <= d_raw + 0.02, "{kind}: Z {d_z} vs X {d_raw}");
    }
}

#[test]
fn cube_shell_fraction_does_not_grow_with_dimension() {
    let frac = |n: usize| {
        let eps = (n as f64).powf(-1.0 / 15.0);
        let norms = Pipeline::new(BodySpec::new(BodyKind::Cube, n).unwrap(), 1_000_000, 90).norms().unwrap();
        let root = (n as f64).sqrt();
        norms.iter().filter(|r| (*r / root - 1.0).abs() > eps).count()
    };
    assert!(frac(400) <= frac(100));
}
