//! Standard normal primitives.
//!
//! The unchecked functions (`pdf`, `cdf`, `ccdf`, `mills`) are the hot-path
//! versions used inside estimators and quadrature loops. The `std_normal_*`
//! and `inverse_mills` wrappers reject non-finite input.
//!
//! Tail handling: `cdf` switches from `erfc` to `pdf(z) * R(-z)` below
//! `z = -8`, where `R` is the upper-tail Mills ratio evaluated by continued
//! fraction. The inverse Mills ratio `pdf/cdf` uses the same continued
//! fraction below [`MILLS_CROSSOVER`], so it never divides two underflowing
//! quantities.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{finite, Result};

/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument `inverse_mills` uses the continued-fraction branch.
pub const MILLS_CROSSOVER: f64 = -6.0;

const CDF_TAIL: f64 = 8.0;

#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Upper-tail Mills ratio `(1 - Phi(x)) / phi(x)` for `x > 0`, by Lentz's
/// method on `R(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))`.
///
/// Converges quickly for `x >= 2`; callers only use it for `x >= 6`.
pub(crate) fn upper_tail_ratio(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..2000 {
        let a = n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    1.0 / f
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    if z < -CDF_TAIL {
        pdf(z) * upper_tail_ratio(-z)
    } else if z > CDF_TAIL {
        1.0 - pdf(z) * upper_tail_ratio(z)
    } else {
        0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
    }
}

/// `1 - Phi(z)` without cancellation.
#[inline]
pub fn ccdf(z: f64) -> f64 {
    cdf(-z)
}

/// `phi(z) / Phi(z)`.
#[inline]
pub fn mills(z: f64) -> f64 {
    mills_with_crossover(z, MILLS_CROSSOVER)
}

/// [`mills`] with the switch to the continued fraction moved to `crossover`.
/// Only [`MILLS_CROSSOVER`] is accurate everywhere; other values exist so the
/// verification suite can show that it notices a misplaced branch point.
#[inline]
pub fn mills_with_crossover(z: f64, crossover: f64) -> f64 {
    if z < crossover {
        1.0 / upper_tail_ratio(-z)
    } else {
        pdf(z) / cdf(z)
    }
}

pub fn std_normal_pdf(z: f64) -> Result<f64> {
    finite("std_normal_pdf", z).map(pdf)
}

pub fn std_normal_cdf(z: f64) -> Result<f64> {
    finite("std_normal_cdf", z).map(cdf)
}

pub fn inverse_mills(z: f64) -> Result<f64> {
    finite("inverse_mills", z).map(mills)
}

/// Closed forms of the three Gaussian integrals
/// `∫Φ(ax+b)φ(x)dx`, `∫xφ(ax+b)φ(x)dx` and `∫x²Φ(ax+b)φ(x)dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityTriple {
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
}

pub fn phi_phi_moments(a: f64, b: f64) -> Result<IdentityTriple> {
    finite("phi_phi_moments", a)?;
    finite("phi_phi_moments", b)?;
    let s = (1.0 + a * a).sqrt();
    let z = b / s;
    let scale = pdf(z) / (s * s * s);
    let i0 = cdf(z);
    Ok(IdentityTriple {
        i0,
        i1: -a * b * scale,
        i2: i0 - a * a * b * scale,
    })
}
