//! Estimators of the selected treatment mean.
//!
//! Every estimator here is location and permutation equivariant, i.e. of the
//! form `t1 + psi(d1, d2)`. The improved variants replace the estimate by
//! the three-mean pooled average on the region where `psi` lies on the far
//! side of `n1 / (2 n1 + n2) * (t2 - t1)` from zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reduce, SufficientStatistics, TrialDesign, TwoStageObservation};
use crate::normal::{ccdf, cdf, mills, pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimatorId {
    Mle,
    Umvcue,
    UmvcueImproved,
    SingleStage,
    SingleStageImproved,
    SingleStageRb,
    Delta1,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::Mle,
        EstimatorId::Umvcue,
        EstimatorId::UmvcueImproved,
        EstimatorId::SingleStage,
        EstimatorId::SingleStageImproved,
        EstimatorId::SingleStageRb,
        EstimatorId::Delta1,
    ];

    /// The estimators drawn in the risk and bias figures.
    pub const FIGURE_SET: [EstimatorId; 5] = [
        EstimatorId::Mle,
        EstimatorId::Umvcue,
        EstimatorId::UmvcueImproved,
        EstimatorId::SingleStageRb,
        EstimatorId::Delta1,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EstimatorId::Mle => "MLE",
            EstimatorId::Umvcue => "UMVCUE",
            EstimatorId::UmvcueImproved => "UMVCUE_IMPROVED",
            EstimatorId::SingleStage => "SINGLE_STAGE",
            EstimatorId::SingleStageImproved => "SINGLE_STAGE_IMPROVED",
            EstimatorId::SingleStageRb => "SINGLE_STAGE_RB",
            EstimatorId::Delta1 => "DELTA1",
        }
    }

    /// Conventional symbol, e.g. `delta_BG^I`.
    pub fn symbol(self) -> &'static str {
        match self {
            EstimatorId::Mle => "delta_M",
            EstimatorId::Umvcue => "delta_BG",
            EstimatorId::UmvcueImproved => "delta_BG^I",
            EstimatorId::SingleStage => "delta_0",
            EstimatorId::SingleStageImproved => "delta_0^I",
            EstimatorId::SingleStageRb => "delta_0^RB",
            EstimatorId::Delta1 => "delta_1",
        }
    }

    /// Position in [`EstimatorId::ALL`].
    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        EstimatorId::ALL
            .into_iter()
            .find(|id| id.tag() == norm)
            .ok_or_else(|| Error::UnknownEstimator(s.to_string()))
    }
}

/// A location and permutation equivariant estimator `t1 + psi(d1, d2)`.
#[derive(Clone, Copy)]
pub struct EquivariantShift<F> {
    psi: F,
}

impl<F: Fn(f64, f64) -> f64> EquivariantShift<F> {
    pub fn new(psi: F) -> Self {
        Self { psi }
    }

    #[inline]
    pub fn psi(&self, d1: f64, d2: f64) -> f64 {
        (self.psi)(d1, d2)
    }

    pub fn estimate(&self, stats: &SufficientStatistics) -> f64 {
        stats.t1 + self.psi(stats.d1, stats.d2)
    }
}

/// Shift of the UMVCUE, `-sigma * sqrt(n1/(n2(n1+n2))) * phi(Q)/Phi(Q)`.
pub fn psi_bg(design: &TrialDesign) -> EquivariantShift<impl Fn(f64, f64) -> f64 + Copy> {
    let (n1, n2) = (design.n1f(), design.n2f());
    let scale = design.umvcue_scale();
    let sigma = design.sigma;
    EquivariantShift::new(move |d1: f64, d2: f64| {
        let q = scale * (n2 * d2 - (n1 + n2) * d1) / sigma;
        -sigma * scale * mills(q)
    })
}

/// Shift of the single-stage estimator `xbar_s`, `-n2 d2 / (n1 + n2)`.
pub fn psi_single_stage(design: &TrialDesign) -> EquivariantShift<impl Fn(f64, f64) -> f64 + Copy> {
    let (n1, n2) = (design.n1f(), design.n2f());
    EquivariantShift::new(move |_d1: f64, d2: f64| -n2 * d2 / (n1 + n2))
}

#[inline]
pub(crate) fn pooled_from_stats(design: &TrialDesign, s: &SufficientStatistics) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    ((n1 + n2) * s.t1 + n1 * s.t2) / (2.0 * n1 + n2)
}

pub fn mle(stats: &SufficientStatistics) -> f64 {
    stats.t1
}

pub fn umvcue(design: &TrialDesign, stats: &SufficientStatistics) -> f64 {
    stats.t1 - design.sigma * design.umvcue_scale() * mills(stats.q)
}

/// Average of all three sample means weighted by sample size.
pub fn pooled_mean(design: &TrialDesign, obs: &TwoStageObservation) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    (n1 * (obs.xbar1 + obs.xbar2) + n2 * obs.ybar) / (2.0 * n1 + n2)
}

/// Dominating estimator for an arbitrary equivariant `t1 + psi(d1, d2)`:
/// switch to the pooled mean when `psi < c <= 0` or `0 <= c < psi`, with
/// `c = n1/(2n1+n2) * (t2 - t1)`. Boundary points are left unchanged.
pub fn improve_equivariant<F: Fn(f64, f64) -> f64>(
    delta: &EquivariantShift<F>,
    design: &TrialDesign,
    obs: &TwoStageObservation,
) -> Result<f64> {
    let s = reduce(design, obs)?;
    let psi = delta.psi(s.d1, s.d2);
    let c = design.pooling_slope() * (s.t2 - s.t1);
    Ok(if (psi < c && c <= 0.0) || (0.0 <= c && c < psi) {
        pooled_mean(design, obs)
    } else {
        s.t1 + psi
    })
}

/// Upper end of the pooling window for the improved UMVCUE:
/// `xbar_loser + (2n1+n2) sigma / sqrt(n1 n2 (n1+n2)) * phi(Q)/Phi(Q)`.
#[inline]
pub fn umvcue_pooling_bound(design: &TrialDesign, stats: &SufficientStatistics) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    let width = (2.0 * n1 + n2) * design.sigma / (n1 * n2 * (n1 + n2)).sqrt();
    stats.xbar_loser + width * mills(stats.q)
}

/// Width `x*` of the pooling window of the improved UMVCUE in terms of
/// `x = t1 - t2`: the window is `0 <= x < x*`, where `x*` solves
/// `x = (2n1+n2) sigma / sqrt(n1 n2 (n1+n2)) * phi(Q(x))/Phi(Q(x))` with
/// `Q(x) = sqrt(n1/(n2(n1+n2))) (n1+n2) x / sigma`.
pub fn umvcue_pooling_width(design: &TrialDesign) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    let width = (2.0 * n1 + n2) * design.sigma / (n1 * n2 * (n1 + n2)).sqrt();
    let slope = design.umvcue_scale() * (n1 + n2) / design.sigma;
    let gap = |x: f64| x - width * mills(slope * x);
    let (mut lo, mut hi) = (0.0, width * mills(0.0));
    while gap(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Statistics carrying only `(t1, t2)`; the stage-1 winner fields are NaN.
/// Valid input for every estimator except the two single-stage ones.
pub(crate) fn pooled_statistics(design: &TrialDesign, t1: f64, t2: f64) -> SufficientStatistics {
    let (n1, n2) = (design.n1f(), design.n2f());
    SufficientStatistics {
        xbar_s: f64::NAN,
        xbar_loser: t2,
        ybar: f64::NAN,
        d1: f64::NAN,
        d2: f64::NAN,
        t1,
        t2,
        q: design.umvcue_scale() * (n1 + n2) * (t1 - t2) / design.sigma,
        w: n1 / (n1 + n2),
    }
}

fn umvcue_improved_stats(design: &TrialDesign, s: &SufficientStatistics) -> f64 {
    if s.xbar_loser <= s.t1 && s.t1 < umvcue_pooling_bound(design, s) {
        pooled_from_stats(design, s)
    } else {
        umvcue(design, s)
    }
}

/// Improved UMVCUE: pooled mean when
/// `xbar_loser <= t1 < xbar_loser + (2n1+n2) sigma / sqrt(n1 n2 (n1+n2)) * phi(Q)/Phi(Q)`.
pub fn umvcue_improved(design: &TrialDesign, obs: &TwoStageObservation) -> Result<f64> {
    let s = reduce(design, obs)?;
    Ok(if s.xbar_loser <= s.t1 && s.t1 < umvcue_pooling_bound(design, &s) {
        pooled_mean(design, obs)
    } else {
        umvcue(design, &s)
    })
}

pub fn single_stage(stats: &SufficientStatistics) -> f64 {
    stats.xbar_s
}

fn single_stage_improved_stats(design: &TrialDesign, s: &SufficientStatistics) -> f64 {
    let (n1, n2) = (design.n1f(), design.n2f());
    let lhs = -n2 * (s.ybar - s.xbar_s) / (n1 + n2);
    let c = n1 / (2.0 * n1 + n2) * (s.xbar_loser - s.t1);
    if (lhs < c && c <= 0.0) || (0.0 <= c && c < lhs) {
        pooled_from_stats(design, s)
    } else {
        s.t1 + lhs
    }
}

/// Improved single-stage estimator.
pub fn single_stage_improved(design: &TrialDesign, obs: &TwoStageObservation) -> Result<f64> {
    let s = reduce(design, obs)?;
    let (n1, n2) = (design.n1f(), design.n2f());
    let lhs = -n2 * (s.ybar - s.xbar_s) / (n1 + n2);
    let c = n1 / (2.0 * n1 + n2) * (s.xbar_loser - s.t1);
    Ok(if (lhs < c && c <= 0.0) || (0.0 <= c && c < lhs) {
        pooled_mean(design, obs)
    } else {
        s.t1 + lhs
    })
}

/// `E[xbar_s | t1, t2]`: the winner's stage-1 mean given the pooled mean is
/// `N(t1, sigma_1^2)` truncated to `(t2, inf)`.
pub fn single_stage_rb(design: &TrialDesign, stats: &SufficientStatistics) -> f64 {
    let s1 = design.conditional_winner_sd();
    stats.t1 + s1 * mills((stats.t1 - stats.t2) / s1)
}

/// Rao–Blackwellized improved single-stage estimator.
///
/// For `t1 > t2`, with `z = (t1 - t2)/sigma_1` and `k = n1/(2n1+n2)`:
/// `pooled * (Phi(z) - Phi(kz))/Phi(z) + (sigma_1 phi(kz) + t1 Phi(kz))/Phi(z)`;
/// otherwise the pooled mean.
pub fn delta1(design: &TrialDesign, stats: &SufficientStatistics) -> f64 {
    let pooled = pooled_from_stats(design, stats);
    if stats.t1 <= stats.t2 {
        return pooled;
    }
    let s1 = design.conditional_winner_sd();
    let z = (stats.t1 - stats.t2) / s1;
    let kz = design.pooling_slope() * z;
    // z > 0 here, so Phi(z) >= 1/2.
    let p = cdf(z);
    let window = ccdf(kz) - ccdf(z);
    (pooled * window + s1 * pdf(kz) + stats.t1 * cdf(kz)) / p
}

/// All seven estimates, in [`EstimatorId::ALL`] order.
pub fn evaluate_all(design: &TrialDesign, s: &SufficientStatistics) -> [f64; 7] {
    let bg = umvcue(design, s);
    [
        mle(s),
        bg,
        umvcue_improved_stats(design, s),
        single_stage(s),
        single_stage_improved_stats(design, s),
        single_stage_rb(design, s),
        delta1(design, s),
    ]
}

#[inline]
pub fn evaluate(id: EstimatorId, design: &TrialDesign, s: &SufficientStatistics) -> f64 {
    match id {
        EstimatorId::Mle => mle(s),
        EstimatorId::Umvcue => umvcue(design, s),
        EstimatorId::UmvcueImproved => umvcue_improved_stats(design, s),
        EstimatorId::SingleStage => single_stage(s),
        EstimatorId::SingleStageImproved => single_stage_improved_stats(design, s),
        EstimatorId::SingleStageRb => single_stage_rb(design, s),
        EstimatorId::Delta1 => delta1(design, s),
    }
}

pub fn estimate(id: EstimatorId, design: &TrialDesign, obs: &TwoStageObservation) -> Result<f64> {
    let s = reduce(design, obs)?;
    Ok(evaluate(id, design, &s))
}

/// Dispatch by tag string.
pub fn estimate_by_tag(tag: &str, design: &TrialDesign, obs: &TwoStageObservation) -> Result<f64> {
    estimate(tag.parse()?, design, obs)
}

/// Finds the `sigma` at which the UMVCUE of `obs` equals `target`, by
/// bisection. The UMVCUE decreases strictly in `sigma` from `t1`, so a
/// root exists iff `target < t1` and the shift argument `Q` is positive.
pub fn back_solve_sigma(n1: u32, n2: u32, obs: &TwoStageObservation, target: f64) -> Result<f64> {
    let at = |sigma: f64| -> Result<f64> {
        let design = TrialDesign::new(n1, n2, sigma)?;
        estimate(EstimatorId::Umvcue, &design, obs)
    };
    let probe = reduce(&TrialDesign::new(n1, n2, 1.0)?, obs)?;
    if !(target < probe.t1) || probe.q <= 0.0 {
        return Err(Error::Bracketing(format!(
            "UMVCUE target {target} must lie below t1 = {} with positive Q",
            probe.t1
        )));
    }
    let mut lo = 1e-300_f64.max(probe.t1.abs() * 1e-12);
    let mut hi = lo.max(1.0);
    let mut steps = 0;
    while at(hi)? > target {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > 2100 {
            return Err(Error::Bracketing(format!("no sigma reaches UMVCUE = {target}")));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
