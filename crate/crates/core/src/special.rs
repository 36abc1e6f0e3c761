//! Reference normal-distribution functions: CDF, PDF, and a high-precision
//! quantile function used as the oracle for the fixed-point datapath.

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.5066282746310005024;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF via the complementary error function, accurate in
/// both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper-tail probability P(X > x).
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal quantile Phi^-1(u), absolute error below 2^-40.
///
/// A rational initial approximation (Acklam) is refined with two Halley
/// iterations against the erfc-based CDF, which keeps full accuracy even
/// at tail quantiles like 2^-32.
pub fn icdf_reference(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile argument {u} outside (0, 1)")));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    if u > 0.5 {
        // Reflection; 1 - u costs at most one ulp of u, well inside budget.
        return Ok(-icdf_lower(1.0 - u));
    }
    Ok(icdf_lower(u))
}

/// Quantile for the lower half, u in (0, 0.5). No cancellation: the CDF is
/// evaluated through erfc on the same side as u.
fn icdf_lower(u: f64) -> f64 {
    let mut x = acklam_lower(u);
    // Two Halley steps: d = (Phi(x) - u)/phi(x), x <- x - d/(1 + x d / 2).
    for _ in 0..2 {
        let f = normal_cdf(x) - u;
        let d = f / normal_pdf(x);
        x -= d / (1.0 + 0.5 * x * d);
    }
    x
}

/// Acklam's rational approximation, lower branch (u <= 0.5). Relative error
/// about 1.15e-9, more than enough to seed Halley refinement.
fn acklam_lower(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;

    if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Crest factor for a w-bit URN input: sqrt(2) * erfinv(1 - 2^(1-w)),
/// i.e. the quantile at 1 - 2^-w, the largest magnitude the inversion
/// method can produce.
pub fn crest_factor(width: u32) -> f64 {
    assert!(width >= 2, "crest factor requires width >= 2");
    -icdf_lower((width as f64).exp2().recip())
}
