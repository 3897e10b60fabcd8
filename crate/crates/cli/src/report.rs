use std::fmt::Write as _;

use serde::Serialize;

use selmean_core::estimators::{back_solve_sigma, evaluate_all, EstimatorId};
use selmean_core::model::{reduce, SufficientStatistics, TrialDesign};

use crate::dataset::TrialDataset;
use crate::error::{CliError, Result};

/// How the common standard deviation is obtained for real data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    Fixed(f64),
    /// Pooled sample SD of the two stage-1 arms.
    PooledStage1,
    /// The sigma at which the UMVCUE equals the given value.
    MatchUmvcue(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub estimator: EstimatorId,
    pub symbol: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n1: u32,
    pub n2: u32,
    pub sigma: f64,
    pub sigma_source: String,
    pub stage1_means: [f64; 2],
    pub stage2_mean: f64,
    pub selected_arm: u8,
    pub statistics: SufficientStatistics,
    pub estimates: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn value(&self, id: EstimatorId) -> f64 {
        self.estimates[id.position()].value
    }

    /// Plain-text table with six significant digits.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let [a, b] = self.stage1_means;
        let _ = writeln!(out, "design      n1 = {}, n2 = {}", self.n1, self.n2);
        let _ = writeln!(out, "sigma       {} ({})", sig6(self.sigma), self.sigma_source);
        let _ = writeln!(out, "stage 1     arm 1 mean {}, arm 2 mean {}", sig6(a), sig6(b));
        let _ = writeln!(out, "stage 2     arm {} selected, mean {}", self.selected_arm, sig6(self.stage2_mean));
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<24}{:<14}{:>14}", "estimator", "symbol", "estimate");
        for e in &self.estimates {
            let _ = writeln!(out, "{:<24}{:<14}{:>14}", e.estimator.tag(), e.symbol, sig6(e.value));
        }
        out
    }
}

/// Six significant digits in fixed notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..=15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn resolve_sigma(dataset: &TrialDataset, policy: SigmaPolicy) -> Result<(f64, String)> {
    let check = |s: f64| if s > 0.0 && s.is_finite() { Ok(s) } else { Err(CliError::InvalidSigma(s)) };
    match policy {
        SigmaPolicy::Fixed(s) => Ok((check(s)?, "fixed".to_string())),
        SigmaPolicy::PooledStage1 => Ok((check(dataset.pooled_stage1_sd()?)?, "pooled stage-1 sample SD".to_string())),
        SigmaPolicy::MatchUmvcue(target) => {
            let s = back_solve_sigma(dataset.n1() as u32, dataset.n2() as u32, &dataset.observation()?, target)?;
            Ok((s, format!("back-solved so that UMVCUE = {target}")))
        }
    }
}

pub fn estimate_command(dataset: &TrialDataset, policy: SigmaPolicy) -> Result<EstimateReport> {
    dataset.validate()?;
    let obs = dataset.observation()?;
    let (sigma, sigma_source) = resolve_sigma(dataset, policy)?;
    let design = TrialDesign::new(dataset.n1() as u32, dataset.n2() as u32, sigma)?;
    let statistics = reduce(&design, &obs)?;
    let values = evaluate_all(&design, &statistics);
    let estimates = EstimatorId::ALL
        .iter()
        .map(|&id| EstimateEntry {
            estimator: id,
            symbol: id.symbol(),
            value: values[id.position()],
        })
        .collect();
    Ok(EstimateReport {
        n1: design.n1,
        n2: design.n2,
        sigma,
        sigma_source,
        stage1_means: dataset.stage1_means(),
        stage2_mean: dataset.stage2_mean(),
        selected_arm: obs.selected.index(),
        statistics,
        estimates,
    })
}
