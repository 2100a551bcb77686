//! Scalar Gaussian density and distribution function.
//!
//! `Φ` is evaluated as `erfc(-z/√2)/2` using the FreeBSD msun `erfc`
//! (via `libm`), which is accurate to under one ulp in double precision.
//! Upper tails are computed directly from `erfc` so that values such as
//! `1 - Φ(8)` keep full relative precision.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{domain, Result};

pub(crate) const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian density with the given mean and standard deviation.
pub fn gauss_pdf(z: f64, mean: f64, sd: f64) -> Result<f64> {
    if !z.is_finite() || !mean.is_finite() {
        return domain(format!("gauss_pdf: non-finite input z={z}, mean={mean}"));
    }
    if !(sd > 0.0) || !sd.is_finite() {
        return domain(format!("gauss_pdf: standard deviation must be positive, got {sd}"));
    }
    Ok(normal_pdf(z - mean, sd))
}

/// Standard normal distribution function.
///
/// Infinite arguments map to the limits 0 and 1; NaN is rejected.
pub fn gauss_cdf(z: f64) -> Result<f64> {
    if z.is_nan() {
        return domain("gauss_cdf: NaN input");
    }
    Ok(norm_cdf(z))
}

/// `φ_sd(d)` without validation.
#[inline]
pub(crate) fn normal_pdf(d: f64, sd: f64) -> f64 {
    let u = d / sd;
    (-0.5 * u * u).exp() * INV_SQRT_2PI / sd
}

/// `log φ_sd(d)` without validation.
#[inline]
pub(crate) fn normal_log_pdf(d: f64, sd: f64) -> f64 {
    let u = d / sd;
    -0.5 * u * u - LN_SQRT_2PI - sd.ln()
}

#[inline]
pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `1 - Φ(z)`.
#[inline]
pub(crate) fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `Φ(b) - Φ(a)` for `a <= b`, evaluated on whichever tail keeps precision.
pub(crate) fn norm_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        (norm_sf(a) - norm_sf(b)).max(0.0)
    } else if b <= 0.0 {
        (norm_cdf(b) - norm_cdf(a)).max(0.0)
    } else {
        (1.0 - norm_cdf(a) - norm_sf(b)).max(0.0)
    }
}
