//! Deterministic risk, bias and conditional bias of all seven estimators.
//!
//! Per selection branch the integral runs over the loser's stage-1 mean `v`
//! and the pooled mean `t1`. Given `t1`, the winner's stage-1 mean is
//! `N(t1, sigma_1^2)`, so the selection event `w > v` contributes the factor
//! `Phi((t1 - v)/sigma_1)` and the two single-stage estimators, which also
//! depend on `w`, reduce to truncated-normal moments in closed form. The
//! `t1` axis is split wherever an estimator jumps: at `t1 = v` and at
//! `t1 = v + x*` (the improved UMVCUE window).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    evaluate, pooled_from_stats, pooled_statistics, umvcue_pooling_bound, umvcue_pooling_width, EstimatorId,
};
use crate::model::{Arm, TrialDesign};
use crate::normal::{ccdf, cdf, pdf};
use crate::quadrature::{panel_nodes, LegendreRule, QuadratureSpec};

/// Largest change allowed when the node count is doubled.
const CONVERGENCE_TOL: f64 = 1e-7;
const MAX_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskValue {
    pub mse: f64,
    pub bias: f64,
}

const N_EST: usize = 7;
const SINGLE: usize = EstimatorId::SingleStage as usize;
const SINGLE_IMPROVED: usize = EstimatorId::SingleStageImproved as usize;

/// Integrals of `(delta - mu_S)^p` over one selection branch.
#[derive(Debug, Clone, Copy, Default)]
struct BranchMoments {
    mass: f64,
    first: [f64; N_EST],
    second: [f64; N_EST],
    /// Probability mass on which the improved UMVCUE and the improved
    /// single-stage estimator return the pooled mean.
    pooled: [f64; 2],
}

impl BranchMoments {
    /// Largest change between two evaluations, in units of `sigma` for
    /// first moments and `sigma^2` for second moments.
    fn max_shift(&self, other: &Self, sigma: f64) -> f64 {
        let mut shift = (self.mass - other.mass).abs();
        for i in 0..N_EST {
            shift = shift
                .max((self.first[i] - other.first[i]).abs() / sigma)
                .max((self.second[i] - other.second[i]).abs() / (sigma * sigma));
        }
        shift.max((self.pooled[0] - other.pooled[0]).abs().max((self.pooled[1] - other.pooled[1]).abs()))
    }

    fn add(&mut self, other: &Self) {
        self.mass += other.mass;
        for i in 0..N_EST {
            self.first[i] += other.first[i];
            self.second[i] += other.second[i];
        }
        self.pooled[0] += other.pooled[0];
        self.pooled[1] += other.pooled[1];
    }
}

struct Integrator {
    design: TrialDesign,
    rule: LegendreRule,
    halfwidth: f64,
    x_star: f64,
}

impl Integrator {
    fn new(design: &TrialDesign, spec: &QuadratureSpec) -> Self {
        Self {
            design: *design,
            rule: LegendreRule::new(panel_nodes(spec)),
            halfwidth: spec.truncation_halfwidth,
            x_star: umvcue_pooling_width(design),
        }
    }

    /// Moments over the branch where the arm with mean `mu_s` wins and the
    /// arm with mean `mu_l` loses.
    fn branch(&self, mu_s: f64, mu_l: f64) -> BranchMoments {
        let d = &self.design;
        let h = self.halfwidth;
        let sd_t = (d.sigma * d.sigma / (d.n1f() + d.n2f())).sqrt();
        let tau1 = d.stage1_sd();
        let s1 = d.conditional_winner_sd();
        let k = d.pooling_slope();
        let panel_v = 2.0 * tau1.min(s1);
        let panel_t = 2.0 * sd_t.min(s1);

        let mut acc = BranchMoments::default();
        self.rule.for_each_node(mu_l - h * tau1, mu_l + h * tau1, panel_v, |v, wv| {
            let fv = wv * pdf((v - mu_l) / tau1) / tau1;
            let lo = (mu_s - h * sd_t).max(v - h * s1);
            let hi = mu_s + h * sd_t;
            if !(hi > lo) {
                return;
            }
            let mut cuts = [lo, v, v + self.x_star, hi];
            cuts[1] = cuts[1].clamp(lo, hi);
            cuts[2] = cuts[2].clamp(lo, hi);
            for seg in cuts.windows(2) {
                self.rule.for_each_node(seg[0], seg[1], panel_t, |t1, wt| {
                    let weight = fv * wt * pdf((t1 - mu_s) / sd_t) / sd_t;
                    self.accumulate(&mut acc, weight, t1, v, mu_s, s1, k);
                });
            }
        });
        acc
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn accumulate(&self, acc: &mut BranchMoments, weight: f64, t1: f64, v: f64, mu_s: f64, s1: f64, k: f64) {
        let d = &self.design;
        let z = (t1 - v) / s1;
        let pz = cdf(z);
        let fz = pdf(z);
        let wp = weight * pz;
        acc.mass += wp;

        let stats = pooled_statistics(d, t1, v);
        for id in EstimatorId::ALL {
            let i = id as usize;
            if i == SINGLE || i == SINGLE_IMPROVED {
                continue;
            }
            let e = evaluate(id, d, &stats) - mu_s;
            acc.first[i] += wp * e;
            acc.second[i] += wp * e * e;
        }
        if stats.xbar_loser <= stats.t1 && stats.t1 < umvcue_pooling_bound(d, &stats) {
            acc.pooled[0] += wp;
        }

        // winner mean w ~ N(t1, s1^2) on (v, inf): write w - mu_s = a + s1 u
        let a = t1 - mu_s;
        let tail = |p: f64, f: f64, lower: f64| -> (f64, f64) {
            // ∫_{lower}^∞ (a + s1 u)^j φ(u) du for j = 1, 2, given p = Φ(-lower), f = φ(lower)
            (a * p + s1 * f, a * a * p + 2.0 * a * s1 * f + s1 * s1 * (p + lower * f))
        };
        let (m1, m2) = tail(pz, fz, -z);
        acc.first[SINGLE] += weight * m1;
        acc.second[SINGLE] += weight * m2;

        let e_pool = pooled_from_stats(d, &stats) - mu_s;
        if t1 <= v {
            acc.first[SINGLE_IMPROVED] += wp * e_pool;
            acc.second[SINGLE_IMPROVED] += wp * e_pool * e_pool;
            acc.pooled[1] += wp;
        } else {
            // pooled for v < w < t1 + k (v - t1), w itself above
            let kz = k * z;
            let window = ccdf(kz) - ccdf(z);
            let (m1, m2) = tail(cdf(kz), pdf(kz), -kz);
            acc.first[SINGLE_IMPROVED] += weight * (e_pool * window + m1);
            acc.second[SINGLE_IMPROVED] += weight * (e_pool * e_pool * window + m2);
            acc.pooled[1] += weight * window;
        }
    }
}

fn check_inputs(design: &TrialDesign, spec: &QuadratureSpec, means: &[f64]) -> Result<()> {
    design.validate()?;
    spec.validate()?;
    for &m in means {
        crate::error::finite("risk quadrature", m)?;
    }
    Ok(())
}

/// Runs `f` at `spec` and at twice the node count, doubling again up to
/// [`MAX_DOUBLINGS`] times while the moments still move by more than the
/// convergence tolerance. Returns the finest result.
fn converged(
    design: &TrialDesign,
    spec: &QuadratureSpec,
    quantity: &'static str,
    f: impl Fn(&Integrator) -> BranchMoments,
) -> Result<BranchMoments> {
    let mut spec = *spec;
    let mut coarse = f(&Integrator::new(design, &spec));
    let mut shift = f64::NAN;
    for _ in 0..MAX_DOUBLINGS {
        spec = spec.doubled();
        let fine = f(&Integrator::new(design, &spec));
        shift = coarse.max_shift(&fine, design.sigma);
        if shift <= CONVERGENCE_TOL {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::NonConvergence { quantity, shift })
}

fn both_branches(design: &TrialDesign, mu1: f64, mu2: f64, spec: &QuadratureSpec) -> Result<BranchMoments> {
    converged(design, spec, "risk", |q| {
        let mut total = q.branch(mu1, mu2);
        total.add(&q.branch(mu2, mu1));
        total
    })
}

/// MSE and bias of every estimator at arm means `(mu1, mu2)`, in
/// [`EstimatorId::ALL`] order.
pub fn risk_at(design: &TrialDesign, mu1: f64, mu2: f64, spec: &QuadratureSpec) -> Result<[RiskValue; 7]> {
    check_inputs(design, spec, &[mu1, mu2])?;
    let m = both_branches(design, mu1, mu2, spec)?;
    Ok(std::array::from_fn(|i| RiskValue {
        mse: m.second[i],
        bias: m.first[i],
    }))
}

/// [`risk_at`] at the canonical point `(0, theta)`.
pub fn risk_profile(design: &TrialDesign, theta: f64, spec: &QuadratureSpec) -> Result<[RiskValue; 7]> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidDesign(format!("theta must be >= 0 (got {theta})")));
    }
    risk_at(design, 0.0, theta, spec)
}

pub fn risk_quadrature(design: &TrialDesign, theta: f64, id: EstimatorId, spec: &QuadratureSpec) -> Result<RiskValue> {
    Ok(risk_profile(design, theta, spec)?[id.position()])
}

/// Probability, at `(0, theta)`, that an improved estimator returns the
/// pooled mean. Zero for estimators without a pooling rule.
pub fn pooling_probability(design: &TrialDesign, theta: f64, id: EstimatorId, spec: &QuadratureSpec) -> Result<f64> {
    check_inputs(design, spec, &[theta])?;
    let slot = match id {
        EstimatorId::UmvcueImproved => 0,
        EstimatorId::SingleStageImproved => 1,
        _ => return Ok(0.0),
    };
    Ok(both_branches(design, 0.0, theta, spec)?.pooled[slot])
}

/// `P(S = arm)` at arm means `(mu1, mu2)`.
pub fn selection_probability(design: &TrialDesign, mu1: f64, mu2: f64, arm: Arm) -> f64 {
    let gap = match arm {
        Arm::One => mu1 - mu2,
        Arm::Two => mu2 - mu1,
    };
    cdf(gap / (std::f64::consts::SQRT_2 * design.stage1_sd()))
}

/// `E[delta | S = arm] - mu_arm` for every estimator.
pub fn conditional_bias_profile(
    design: &TrialDesign,
    mu1: f64,
    mu2: f64,
    arm: Arm,
    spec: &QuadratureSpec,
) -> Result<[f64; 7]> {
    check_inputs(design, spec, &[mu1, mu2])?;
    let probability = selection_probability(design, mu1, mu2, arm);
    if !(probability > 1e-12) {
        return Err(Error::VanishingSelection {
            arm: arm.index(),
            probability,
        });
    }
    let (mu_s, mu_l) = match arm {
        Arm::One => (mu1, mu2),
        Arm::Two => (mu2, mu1),
    };
    let m = converged(design, spec, "conditional bias", |q| q.branch(mu_s, mu_l))?;
    Ok(std::array::from_fn(|i| m.first[i] / m.mass))
}

pub fn conditional_bias_quadrature(
    design: &TrialDesign,
    mu1: f64,
    mu2: f64,
    id: EstimatorId,
    arm: Arm,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(conditional_bias_profile(design, mu1, mu2, arm, spec)?[id.position()])
}
