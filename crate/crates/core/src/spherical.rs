//! Marginals of the uniform measure on a sphere.
//!
//! `ψ_{n,ℓ,r}` is the density in `R^ℓ` of the projection of the uniform
//! measure on the radius-`r` sphere of `R^n`:
//!
//! ```text
//! ψ_{n,ℓ,r}(t) = Γ_{n,ℓ} r^(-ℓ) (1 - t²/r²)^((n-ℓ-2)/2)   for t <= r, else 0
//! Γ_{n,ℓ}     = π^(-ℓ/2) Γ(n/2) / Γ((n-ℓ)/2)
//! ```
//!
//! The exponent reaches the hundreds for realistic `n`, so every evaluation
//! goes through `ln ψ` and exponentiates once at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RadialDensity, RadialForm, RatioReport, Validate};
use crate::quad::{integrate, QuadConfig};
use crate::scalar::Real;
use crate::special::{ln_chi_density, ln_gamma_ratio, ln_unit_sphere_area};

/// `(n, ℓ, r)` for the kernel `ψ_{n,ℓ,r}`; requires `1 <= ℓ < n`.
///
/// `ℓ = n` is rejected: `Γ_{n,n}` vanishes and the marginal is the sphere
/// itself, which has no density. `ℓ = n - 1` gives an integrable
/// `(1 - t²/r²)^(-1/2)` singularity at `t = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    pub n: usize,
    pub l: usize,
    pub r: T,
}

impl<T: Real> KernelParams<T> {
    pub fn new(n: usize, l: usize, r: T) -> Result<Self> {
        Self { n, l, r }.validate()
    }

    /// `(n - ℓ - 2)/2`.
    pub fn exponent(&self) -> T {
        (T::from_usize_lossy(self.n) - T::from_usize_lossy(self.l) - T::lit(2.0)) * T::lit(0.5)
    }
}

impl<T: Real> Validate for KernelParams<T> {
    fn check(&self) -> Result<()> {
        if self.l == 0 || self.l >= self.n {
            return Err(Error::Domain(format!(
                "kernel needs 1 <= l < n, got n={} l={}",
                self.n, self.l
            )));
        }
        if !(self.r > T::zero() && self.r.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive, got {}", self.r)));
        }
        Ok(())
    }
}

/// `ln Γ_{n,ℓ} = -(ℓ/2) ln π + ln Γ(n/2) - ln Γ((n-ℓ)/2)`.
pub fn log_gamma_nl<T: Real>(n: usize, l: usize) -> Result<T> {
    if l == 0 || l >= n {
        return Err(Error::Domain(format!("Γ_(n,l) needs 1 <= l < n, got n={n} l={l}")));
    }
    let half = T::lit(0.5);
    let lf = T::from_usize_lossy(l);
    let base = (T::from_usize_lossy(n) - lf) * half;
    Ok(-lf * half * T::PI().ln() + ln_gamma_ratio(base, lf * half))
}

/// `ln ψ_{n,ℓ,r}(t)`; `-∞` outside `[0, r]`.
pub fn ln_psi<T: Real>(params: &KernelParams<T>, t: T) -> Result<T> {
    params.check()?;
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
    }
    Ok(ln_psi_unchecked(params, log_gamma_nl(params.n, params.l)?, t))
}

fn ln_psi_unchecked<T: Real>(params: &KernelParams<T>, ln_gamma_nl: T, t: T) -> T {
    if t > params.r {
        return T::neg_infinity();
    }
    let s = t / params.r;
    let e = params.exponent();
    let shape = if e == T::zero() { T::zero() } else { e * (-(s * s)).ln_1p() };
    ln_gamma_nl - T::from_usize_lossy(params.l) * params.r.ln() + shape
}

pub fn psi<T: Real>(params: &KernelParams<T>, t: T) -> Result<T> {
    Ok(ln_psi(params, t)?.exp())
}

/// `ln γ_ℓ[v]` at a point of norm `x_norm`.
pub fn ln_gaussian_density<T: Real>(l: usize, v: T, x_norm: T) -> T {
    let half = T::lit(0.5);
    -T::from_usize_lossy(l) * half * (T::TAU() * v).ln() - x_norm * x_norm * half / v
}

/// `γ_ℓ[v](x) = (2πv)^(-ℓ/2) exp(-|x|²/(2v))`; `v` must be positive.
pub fn gaussian_density<T: Real>(l: usize, v: T, x_norm: T) -> T {
    debug_assert!(v > T::zero());
    ln_gaussian_density(l, v, x_norm).exp()
}

fn mixture_quad<T: Real>() -> QuadConfig<T> {
    QuadConfig {
        abs_tol: T::lit(1e-10).max(T::epsilon() * T::lit(16.0)),
        rel_tol: T::lit(1e-10).max(T::epsilon() * T::lit(16.0)),
        max_intervals: 4_000,
    }
}

/// `∫ ψ_{n,ℓ,r}(t) g(r) dr`: the `ℓ`-dimensional marginal, at radius `t`, of
/// the spherically symmetric law with radial density `g`.
///
/// Binned densities use the midpoint rule (bins whose midpoint does not
/// exceed `t` contribute nothing). The chi form is integrated adaptively
/// after substituting `r = t + u²`, which removes the `ℓ = n - 1` endpoint
/// singularity.
pub fn radial_mixture_marginal<T: Real>(g: &RadialDensity<T>, n: usize, l: usize, t: T) -> Result<T> {
    g.check()?;
    let ln_gnl = log_gamma_nl::<T>(n, l)?;
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
    }
    match g.form {
        RadialForm::Binned => {
            let mut acc = T::zero();
            for (mid, &m) in g.midpoints().zip(&g.mass) {
                if mid > t && m > T::zero() {
                    let p = KernelParams { n, l, r: mid };
                    acc = acc + m * ln_psi_unchecked(&p, ln_gnl, t).exp();
                }
            }
            Ok(acc)
        }
        RadialForm::ClosedFormChi { n: dof } => {
            let two = T::lit(2.0);
            let upper = t.max(T::from_usize_lossy(dof).sqrt()) + T::lit(14.0);
            let u_hi = (upper - t).sqrt();
            let integrand = |u: T| {
                if u <= T::zero() {
                    return T::zero();
                }
                let r = t + u * u;
                let p = KernelParams { n, l, r };
                (ln_psi_unchecked(&p, ln_gnl, t) + ln_chi_density(dof, r) + (two * u).ln()).exp()
            };
            let peak = (T::from_usize_lossy(dof).sqrt() - t).max(T::zero()).sqrt();
            let cfg = mixture_quad();
            let mut value = T::zero();
            if peak > T::zero() && peak < u_hi {
                value = value + integrate(integrand, T::zero(), peak, &cfg)?.value;
                value = value + integrate(integrand, peak, u_hi, &cfg)?.value;
            } else {
                value = integrate(integrand, T::zero(), u_hi, &cfg)?.value;
            }
            Ok(value)
        }
    }
}

/// Total mass of `ψ_{n,ℓ,r}` over the `ℓ`-ball of radius `r`, computed as
/// `ω_ℓ ∫ s^(ℓ-1) ψ(s) ds` with `s = r sin θ` so that the integrand stays
/// bounded even when `ℓ = n - 1`.
pub fn kernel_mass<T: Real>(params: &KernelParams<T>) -> Result<T> {
    params.check()?;
    let ln_omega = ln_unit_sphere_area::<T>(params.l);
    let ln_gnl = log_gamma_nl::<T>(params.n, params.l)?;
    let l_minus_1 = T::from_usize_lossy(params.l - 1);
    let r = params.r;
    let integrand = |theta: T| {
        let (sin, cos) = theta.sin_cos();
        if cos <= T::zero() {
            return T::zero();
        }
        let s = r * sin;
        let radial = if params.l == 1 { T::zero() } else { l_minus_1 * s.ln() };
        (ln_omega + radial + ln_psi_unchecked(params, ln_gnl, s) + (r * cos).ln()).exp()
    };
    let cfg = QuadConfig {
        abs_tol: T::lit(1e-12).max(T::epsilon() * T::lit(16.0)),
        rel_tol: T::lit(1e-12).max(T::epsilon() * T::lit(16.0)),
        max_intervals: 2_000,
    };
    Ok(integrate(integrand, T::zero(), T::FRAC_PI_2(), &cfg)?.value)
}

/// One row of the kernel-vs-gaussian scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow<T> {
    pub t: T,
    pub psi: T,
    pub gaussian: T,
    pub ratio: T,
}

/// `ψ_{n,ℓ,√n}(t)` against `γ_ℓ[1](t)` on `grid_points` equispaced radii in
/// `[0, t_max]`, where `t_max < n^(1/8)`.
pub fn psi_gaussian_scan<T: Real>(n: usize, l: usize, t_max: T, grid_points: usize) -> Result<Vec<ScanRow<T>>> {
    let limit = T::from_usize_lossy(n).powf(T::lit(0.125));
    if !(t_max < limit) {
        return Err(Error::Range(format!("t_max {t_max} must be below n^(1/8) = {limit}")));
    }
    if !(t_max >= T::zero()) || grid_points < 2 {
        return Err(Error::Domain("need t_max >= 0 and at least two grid points".into()));
    }
    let params = KernelParams::new(n, l, T::from_usize_lossy(n).sqrt())?;
    let ln_gnl = log_gamma_nl(n, l)?;
    let last = T::from_usize_lossy(grid_points - 1);
    Ok((0..grid_points)
        .map(|k| {
            let t = t_max * T::from_usize_lossy(k) / last;
            let lp = ln_psi_unchecked(&params, ln_gnl, t);
            let lg = ln_gaussian_density(l, T::one(), t);
            ScanRow {
                t,
                psi: lp.exp(),
                gaussian: lg.exp(),
                ratio: (lp - lg).exp(),
            }
        })
        .collect())
}

/// Sup of `|ψ_{n,ℓ,√n}/γ_ℓ[1] - 1|` over the scan grid.
pub fn psi_gaussian_ratio_scan<T: Real>(n: usize, l: usize, t_max: T, grid_points: usize) -> Result<RatioReport<T>> {
    let rows = psi_gaussian_scan(n, l, t_max, grid_points)?;
    Ok(RatioReport::from_ratios(
        rows.iter().map(|r| r.t).collect(),
        rows.iter().map(|r| r.ratio).collect(),
    ))
}
