//! Closed-form distributional results for the pooled mean `U = T1 - mu_S`
//! and for `S1 = xbar_S - mu_S` given the differences `(D1, D2)`, plus the
//! optimal equivariant shift, its bounds over `theta`, and the Bayes rule
//! under a centred normal prior.

mod risk;

pub use risk::{
    conditional_bias_profile, conditional_bias_quadrature, pooling_probability, risk_at, risk_profile,
    risk_quadrature, selection_probability, RiskValue,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SufficientStatistics, TrialDesign};
use crate::normal::{cdf, pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryContext {
    pub design: TrialDesign,
    /// Gap `theta = |mu1 - mu2|`.
    pub theta: f64,
    /// `sigma^2 / (n1 + n2)`
    pub sigma_star_sq: f64,
    /// `n2 / (n1 + n2)`
    pub rho: f64,
}

impl TheoryContext {
    pub fn new(design: TrialDesign, theta: f64) -> Result<Self> {
        design.validate()?;
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::InvalidDesign(format!("theta must be finite and >= 0 (got {theta})")));
        }
        let (n1, n2) = (design.n1f(), design.n2f());
        Ok(Self {
            design,
            theta,
            sigma_star_sq: design.sigma * design.sigma / (n1 + n2),
            rho: n2 / (n1 + n2),
        })
    }

    fn pieces(&self) -> (f64, f64, f64, f64) {
        (self.design.n1f(), self.design.n2f(), self.design.sigma, self.theta)
    }
}

/// Density of `U = T1 - mu_S`:
/// `(1/s*) [Phi(A(u+theta)) + Phi(A(u-theta))] phi(u/s*)` with
/// `A = sqrt(n1) / (sigma sqrt(1 + rho))`.
pub fn density_u(ctx: &TheoryContext, u: f64) -> f64 {
    let (n1, _, sigma, theta) = ctx.pieces();
    let s_star = ctx.sigma_star_sq.sqrt();
    let a = n1.sqrt() / (sigma * (1.0 + ctx.rho).sqrt());
    (cdf(a * (u + theta)) + cdf(a * (u - theta))) * pdf(u / s_star) / s_star
}

/// `E[U^2]`, which does not depend on `theta`.
pub fn second_moment_u(ctx: &TheoryContext) -> f64 {
    ctx.sigma_star_sq
}

/// Exponent `g = theta n1 ((n1+n2) d1 - n2 d2) / ((2n1+n2) sigma^2)`
/// of the two mixture weights `e^{±g}`.
fn mixture_exponent(ctx: &TheoryContext, d1: f64, d2: f64) -> f64 {
    let (n1, n2, sigma, theta) = ctx.pieces();
    theta * n1 * ((n1 + n2) * d1 - n2 * d2) / ((2.0 * n1 + n2) * sigma * sigma)
}

/// The conditional law of `S1` given `(D1, D2) = (d1, d2)` is a two-point
/// mixture of normals with common SD `sigma / sqrt(2n1+n2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S1Mixture {
    /// Weight and mean of the component carrying `e^{+g}`.
    pub upper: (f64, f64),
    /// Weight and mean of the component carrying `e^{-g}`.
    pub lower: (f64, f64),
    pub sd: f64,
}

impl S1Mixture {
    pub fn new(ctx: &TheoryContext, d1: f64, d2: f64) -> Self {
        let (n1, n2, sigma, theta) = ctx.pieces();
        let m = 2.0 * n1 + n2;
        let g = mixture_exponent(ctx, d1, d2);
        // logistic(2g) and logistic(-2g), each without overflow
        let w_up = if g >= 0.0 {
            1.0 / (1.0 + (-2.0 * g).exp())
        } else {
            let e = (2.0 * g).exp();
            e / (1.0 + e)
        };
        let w_down = if g <= 0.0 {
            1.0 / (1.0 + (2.0 * g).exp())
        } else {
            let e = (-2.0 * g).exp();
            e / (1.0 + e)
        };
        let centre = -(n1 * d1 + n2 * d2) / m;
        let offset = n1 * theta / m;
        Self {
            upper: (w_up, centre + offset),
            lower: (w_down, centre - offset),
            sd: sigma / m.sqrt(),
        }
    }

    pub fn density(&self, s: f64) -> f64 {
        let comp = |mean: f64| pdf((s - mean) / self.sd) / self.sd;
        self.upper.0 * comp(self.upper.1) + self.lower.0 * comp(self.lower.1)
    }

    pub fn mean(&self) -> f64 {
        self.upper.0 * self.upper.1 + self.lower.0 * self.lower.1
    }

    pub fn variance(&self) -> f64 {
        let gap = self.upper.1 - self.lower.1;
        self.sd * self.sd + self.upper.0 * self.lower.0 * gap * gap
    }
}

pub fn cond_density_s1(ctx: &TheoryContext, d1: f64, d2: f64, s: f64) -> f64 {
    S1Mixture::new(ctx, d1, d2).density(s)
}

/// `E[S1 | D1 = d1, D2 = d2]`
/// `= (n1 theta/(2n1+n2)) tanh(g) - (n1 d1 + n2 d2)/(2n1+n2)`.
pub fn cond_expect_s1(ctx: &TheoryContext, d1: f64, d2: f64) -> f64 {
    let (n1, n2, _, theta) = ctx.pieces();
    let m = 2.0 * n1 + n2;
    n1 * theta / m * mixture_exponent(ctx, d1, d2).tanh() - (n1 * d1 + n2 * d2) / m
}

/// The finite end of the range of `psi_theta` over `theta >= 0`, attained
/// at `theta = 0`.
pub fn psi_zero(design: &TrialDesign, d1: f64, d2: f64) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    n1 * ((n1 + n2) * d1 - n2 * d2) / ((n1 + n2) * (2.0 * n1 + n2))
}

/// Risk-minimising shift at a fixed `theta`,
/// `-E[S1 | d1, d2] - n2 d2/(n1+n2)`.
pub fn psi_theta(ctx: &TheoryContext, d1: f64, d2: f64) -> f64 {
    let (n1, n2, _, theta) = ctx.pieces();
    psi_zero(&ctx.design, d1, d2) - n1 * theta / (2.0 * n1 + n2) * mixture_exponent(ctx, d1, d2).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiBounds {
    pub inf: f64,
    pub sup: f64,
}

/// `inf` and `sup` of `psi_theta(d1, d2)` over `theta >= 0`. One end is
/// always [`psi_zero`]; the other is infinite.
pub fn psi_bounds(design: &TrialDesign, d1: f64, d2: f64) -> PsiBounds {
    let (n1, n2) = (design.n1f(), design.n2f());
    let finite = psi_zero(design, d1, d2);
    if d1 <= n2 * d2 / (n1 + n2) {
        PsiBounds {
            inf: finite,
            sup: f64::INFINITY,
        }
    } else {
        PsiBounds {
            inf: f64::NEG_INFINITY,
            sup: finite,
        }
    }
}

/// `R1(theta, c) = E[(S1 + n2 d2/(n1+n2) + c)^2 | d1, d2]`.
pub fn conditional_risk_r1(ctx: &TheoryContext, d1: f64, d2: f64, c: f64) -> f64 {
    let (n1, n2, _, _) = ctx.pieces();
    let mix = S1Mixture::new(ctx, d1, d2);
    let bias = mix.mean() + n2 * d2 / (n1 + n2) + c;
    mix.variance() + bias * bias
}

/// Prior `N(0, m^2)` on each arm mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesPrior {
    pub m: f64,
}

impl BayesPrior {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0) || m.is_nan() {
            return Err(Error::InvalidPrior(m));
        }
        Ok(Self { m })
    }
}

/// Posterior mean of `mu_S`, `(n1 xbar_S + n2 ybar) / ((n1+n2) + sigma^2/m^2)`.
pub fn bayes_estimate(prior: &BayesPrior, design: &TrialDesign, stats: &SufficientStatistics) -> f64 {
    let (n1, n2, sigma) = (design.n1f(), design.n2f(), design.sigma);
    let shrink = if prior.m.is_infinite() { 0.0 } else { sigma * sigma / (prior.m * prior.m) };
    (n1 * stats.xbar_s + n2 * stats.ybar) / (n1 + n2 + shrink)
}

/// Bayes risk `1 / ((n1+n2)/sigma^2 + 1/m^2)` of [`bayes_estimate`].
pub fn bayes_risk(prior: &BayesPrior, design: &TrialDesign) -> f64 {
    let sigma = design.sigma;
    1.0 / ((design.n1f() + design.n2f()) / (sigma * sigma) + 1.0 / (prior.m * prior.m))
}
