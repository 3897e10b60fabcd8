//! Two-stage drop-the-losers model: designs, observations, the stage-1
//! selection rule and the sufficient-statistic reduction.

use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};
use crate::stream::ReplicationStream;

/// Fixed experiment configuration: `n1` subjects per arm in stage 1, `n2`
/// subjects on the selected arm in stage 2, known common SD `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    pub n1: u32,
    pub n2: u32,
    pub sigma: f64,
}

impl TrialDesign {
    pub fn new(n1: u32, n2: u32, sigma: f64) -> Result<Self> {
        let design = Self { n1, n2, sigma };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidDesign(format!(
                "stage sizes must be positive (n1 = {}, n2 = {})",
                self.n1, self.n2
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidDesign(format!(
                "sigma must be positive and finite (got {})",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.n1, self.n2, sigma)
    }

    #[inline]
    pub fn n1f(&self) -> f64 {
        self.n1 as f64
    }

    #[inline]
    pub fn n2f(&self) -> f64 {
        self.n2 as f64
    }

    /// SD of a stage-1 arm mean, `sigma / sqrt(n1)`.
    #[inline]
    pub fn stage1_sd(&self) -> f64 {
        self.sigma / self.n1f().sqrt()
    }

    /// SD of the stage-2 mean, `sigma / sqrt(n2)`.
    #[inline]
    pub fn stage2_sd(&self) -> f64 {
        self.sigma / self.n2f().sqrt()
    }

    /// Stage-1 weight `n1 / (n1 + n2)` of the selected-arm pooled mean.
    #[inline]
    pub fn stage1_weight(&self) -> f64 {
        self.n1f() / (self.n1f() + self.n2f())
    }

    /// `n1 / (2 n1 + n2)`, the slope of the improvement threshold.
    #[inline]
    pub fn pooling_slope(&self) -> f64 {
        self.n1f() / (2.0 * self.n1f() + self.n2f())
    }

    /// `sqrt(n1 / (n2 (n1 + n2)))`.
    #[inline]
    pub fn umvcue_scale(&self) -> f64 {
        let (n1, n2) = (self.n1f(), self.n2f());
        (n1 / (n2 * (n1 + n2))).sqrt()
    }

    /// Conditional SD of the winner's stage-1 mean given the pooled mean,
    /// `sigma * sqrt(n2 / (n1 (n1 + n2)))`.
    #[inline]
    pub fn conditional_winner_sd(&self) -> f64 {
        let (n1, n2) = (self.n1f(), self.n2f());
        self.sigma * (n2 / (n1 * (n1 + n2))).sqrt()
    }

    /// Risk of the pooled selected-arm mean, `sigma^2 / (n1 + n2)`.
    #[inline]
    pub fn mle_risk(&self) -> f64 {
        self.sigma * self.sigma / (self.n1f() + self.n2f())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    One,
    Two,
}

impl Arm {
    pub fn index(self) -> u8 {
        match self {
            Arm::One => 1,
            Arm::Two => 2,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::One => Arm::Two,
            Arm::Two => Arm::One,
        }
    }

    pub fn from_index(i: u8) -> Option<Arm> {
        match i {
            1 => Some(Arm::One),
            2 => Some(Arm::Two),
            _ => None,
        }
    }
}

/// True arm means, with the ordered values used by the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub mu1: f64,
    pub mu2: f64,
    /// `min(mu1, mu2)`
    pub theta1: f64,
    /// `max(mu1, mu2)`
    pub theta2: f64,
    /// `theta2 - theta1`
    pub theta: f64,
}

impl ParameterPoint {
    pub fn new(mu1: f64, mu2: f64) -> Self {
        let theta1 = mu1.min(mu2);
        let theta2 = mu1.max(mu2);
        Self {
            mu1,
            mu2,
            theta1,
            theta2,
            theta: theta2 - theta1,
        }
    }

    /// The canonical point `(0, theta)`.
    pub fn from_gap(theta: f64) -> Self {
        Self::new(0.0, theta)
    }

    pub fn mean(&self, arm: Arm) -> f64 {
        match arm {
            Arm::One => self.mu1,
            Arm::Two => self.mu2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageObservation {
    pub xbar1: f64,
    pub xbar2: f64,
    pub selected: Arm,
    pub ybar: f64,
}

impl TwoStageObservation {
    /// Builds an observation, selecting the arm from the stage-1 means.
    pub fn new(xbar1: f64, xbar2: f64, ybar: f64) -> Result<Self> {
        let selected = select_arm(xbar1, xbar2)?;
        finite("TwoStageObservation::new", ybar)?;
        Ok(Self {
            xbar1,
            xbar2,
            selected,
            ybar,
        })
    }

    pub fn shifted(&self, b: f64) -> Self {
        Self {
            xbar1: self.xbar1 + b,
            xbar2: self.xbar2 + b,
            selected: self.selected,
            ybar: self.ybar + b,
        }
    }

    /// Swaps the arm labels. The selected index follows the winner, except
    /// at an exact tie where the tie rule keeps arm 1.
    pub fn swapped(&self) -> Self {
        let selected = if self.xbar1 == self.xbar2 {
            Arm::One
        } else {
            self.selected.other()
        };
        Self {
            xbar1: self.xbar2,
            xbar2: self.xbar1,
            selected,
            ybar: self.ybar,
        }
    }
}

/// Stage-1 selection: arm 1 iff `xbar1 >= xbar2`.
pub fn select_arm(xbar1: f64, xbar2: f64) -> Result<Arm> {
    finite("select_arm", xbar1)?;
    finite("select_arm", xbar2)?;
    Ok(if xbar1 >= xbar2 { Arm::One } else { Arm::Two })
}

/// Derived quantities every estimator consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficientStatistics {
    /// Winner's stage-1 mean.
    pub xbar_s: f64,
    /// Loser's stage-1 mean.
    pub xbar_loser: f64,
    /// Stage-2 mean of the winner.
    pub ybar: f64,
    /// `xbar_loser - xbar_s` (never positive).
    pub d1: f64,
    /// `ybar - xbar_s`
    pub d2: f64,
    /// Pooled selected-arm mean `(n1 xbar_s + n2 ybar) / (n1 + n2)`.
    pub t1: f64,
    /// `xbar_loser`
    pub t2: f64,
    pub q: f64,
    /// `n1 / (n1 + n2)`
    pub w: f64,
}

pub fn reduce(design: &TrialDesign, obs: &TwoStageObservation) -> Result<SufficientStatistics> {
    let expected = select_arm(obs.xbar1, obs.xbar2)?;
    if expected != obs.selected {
        return Err(Error::InconsistentSelection {
            selected: obs.selected.index(),
            xbar1: obs.xbar1,
            xbar2: obs.xbar2,
        });
    }
    finite("reduce", obs.ybar)?;
    Ok(reduce_ordered(design, obs.xbar1.max(obs.xbar2), obs.xbar1.min(obs.xbar2), obs.ybar))
}

/// Reduction from already-ordered (winner, loser, stage-2) means.
#[inline]
pub(crate) fn reduce_ordered(design: &TrialDesign, xbar_s: f64, xbar_loser: f64, ybar: f64) -> SufficientStatistics {
    let (n1, n2) = (design.n1f(), design.n2f());
    let d1 = xbar_loser - xbar_s;
    let d2 = ybar - xbar_s;
    let t1 = (n1 * xbar_s + n2 * ybar) / (n1 + n2);
    let q = design.umvcue_scale() * (n2 * d2 - (n1 + n2) * d1) / design.sigma;
    SufficientStatistics {
        xbar_s,
        xbar_loser,
        ybar,
        d1,
        d2,
        t1,
        t2: xbar_loser,
        q,
        w: n1 / (n1 + n2),
    }
}

/// Builds an observation from three standard normals at fixed draw
/// positions: 0 for arm 1, 1 for arm 2, 2 for the stage-2 mean.
pub fn observation_from_normals(design: &TrialDesign, truth: &ParameterPoint, z: [f64; 3]) -> TwoStageObservation {
    let sd1 = design.stage1_sd();
    let xbar1 = truth.mu1 + sd1 * z[0];
    let xbar2 = truth.mu2 + sd1 * z[1];
    let selected = if xbar1 >= xbar2 { Arm::One } else { Arm::Two };
    let ybar = truth.mean(selected) + design.stage2_sd() * z[2];
    TwoStageObservation {
        xbar1,
        xbar2,
        selected,
        ybar,
    }
}

pub fn sample_observation(
    design: &TrialDesign,
    truth: &ParameterPoint,
    stream: &mut ReplicationStream,
) -> TwoStageObservation {
    observation_from_normals(design, truth, stream.next_replication())
}
