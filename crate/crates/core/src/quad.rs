//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadConfig<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10),
            rel_tol: T::lit(1e-10),
            max_intervals: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

#[derive(Clone, Copy)]
struct Piece<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Piece<T> {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    Piece {
        a,
        b,
        value: kronrod * half_len,
        error: ((kronrod - gauss) * half_len).abs(),
    }
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate meets `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, cfg: &QuadConfig<T>) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
            intervals: 0,
        });
    }
    if b < a {
        let est = integrate(f, b, a, cfg)?;
        return Ok(Estimate {
            value: -est.value,
            ..est
        });
    }
    let mut pieces = vec![kronrod(&f, a, b)];
    loop {
        let value: T = pieces.iter().map(|p| p.value).sum();
        let error: T = pieces.iter().map(|p| p.error).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol {
            return Ok(Estimate {
                value,
                error,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= cfg.max_intervals || !value.is_finite() {
            return Err(Error::Quadrature {
                value: value.to_f64_lossy(),
                error: error.to_f64_lossy(),
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = pieces.swap_remove(worst);
        let mid = T::lit(0.5) * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval can no longer be split in this precision
            return Ok(Estimate {
                value,
                error,
                intervals: pieces.len() + 1,
            });
        }
        pieces.push(kronrod(&f, p.a, mid));
        pieces.push(kronrod(&f, mid, p.b));
    }
}

/// Integrates over consecutive sub-intervals delimited by `breaks`.
pub fn integrate_piecewise<T: Real, F: Fn(T) -> T>(f: F, breaks: &[T], cfg: &QuadConfig<T>) -> Result<Estimate<T>> {
    let mut total = Estimate {
        value: T::zero(),
        error: T::zero(),
        intervals: 0,
    };
    for w in breaks.windows(2) {
        let e = integrate(&f, w[0], w[1], cfg)?;
        total.value = total.value + e.value;
        total.error = total.error + e.error;
        total.intervals += e.intervals;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let cfg = QuadConfig::default();
        let e = integrate(|x: f64| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &cfg).unwrap();
        assert!((e.value - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
        assert_eq!(e.intervals, 1);
    }

    #[test]
    fn peaked_integrand_converges() {
        let cfg = QuadConfig::default();
        let e = integrate(|x: f64| (-(x - 0.3).powi(2) / 2e-4).exp(), 0.0, 1.0, &cfg).unwrap();
        let want = (2.0 * std::f64::consts::PI * 1e-4).sqrt();
        assert!((e.value - want).abs() < 1e-10);
    }

    #[test]
    fn sqrt_singularity_at_endpoint() {
        let cfg = QuadConfig {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_intervals: 5_000,
        };
        let e = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &cfg).unwrap();
        assert!((e.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let cfg = QuadConfig::default();
        let e = integrate(|x: f32| x, 1.0, 0.0, &QuadConfig { abs_tol: 1e-5, rel_tol: 1e-5, ..cfg }).unwrap();
        assert!((e.value + 0.5).abs() < 1e-6);
    }
}
