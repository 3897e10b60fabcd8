//! The invariant suite run by `selmean verify`.
//!
//! Every check reports the largest residual it saw next to its tolerance.
//! Gating checks decide the exit status. The remaining ones record
//! orderings that were observed in simulation rather than proved, and are
//! reported without failing the run.

use rayon::prelude::*;
use serde::Serialize;

use selmean_core::estimators::{
    estimate, improve_equivariant, pooled_mean, psi_bg, psi_single_stage, single_stage_improved, umvcue_improved,
    EstimatorId,
};
use selmean_core::model::{reduce, Arm, TrialDesign, TwoStageObservation};
use selmean_core::normal::{cdf, mills_with_crossover, pdf, phi_phi_moments, MILLS_CROSSOVER};
use selmean_core::quadrature::{LegendreRule, QuadratureSpec};
use selmean_core::sim::{run_sweep, SweepConfig};
use selmean_core::stream::StreamKey;
use selmean_core::theory::{
    cond_density_s1, cond_expect_s1, conditional_bias_quadrature, density_u, psi_theta, risk_profile,
    second_moment_u, RiskValue, S1Mixture, TheoryContext,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Branch point handed to the Mills ratio under test.
    pub mills_crossover: f64,
    pub fuzz_cases: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mills_crossover: MILLS_CROSSOVER,
            fuzz_cases: 10_000,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub gating: bool,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub cases: u64,
}

impl CheckResult {
    fn new(name: &'static str, residual: f64, tolerance: f64, cases: u64) -> Self {
        Self {
            name,
            gating: true,
            // NaN residuals fail
            passed: residual <= tolerance,
            residual,
            tolerance,
            cases,
        }
    }

    fn observation(mut self) -> Self {
        self.gating = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Uniform draws for the fuzz suites, taken from the simulation streams so
/// that every check is reproducible from `seed` alone.
struct Uniforms {
    key: StreamKey,
    next: u64,
}

impl Uniforms {
    fn new(seed: u64, lane: u64) -> Self {
        Self {
            key: StreamKey::new(seed, lane),
            next: 0,
        }
    }

    fn draw(&mut self) -> [f64; 4] {
        let z: [f64; 4] = self.key.normals(self.next);
        self.next += 1;
        z.map(cdf)
    }

    fn design(&mut self) -> TrialDesign {
        let [a, b, c, _] = self.draw();
        TrialDesign::new(1 + (a * 25.0) as u32, 1 + (b * 25.0) as u32, 0.3 + 2.7 * c).expect("valid design")
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panel: f64) -> f64 {
    LegendreRule::new(24).integrate(lo, hi, panel, f)
}

fn gaussian_identities(opts: &VerifyOptions) -> CheckResult {
    let mut u = Uniforms::new(opts.seed, 1);
    let residual = max_abs((0..100).flat_map(|_| {
        let [p, q, _, _] = u.draw();
        let (a, b) = (8.0 * p - 4.0, 8.0 * q - 4.0);
        let t = phi_phi_moments(a, b).expect("finite inputs");
        let panel = 0.25 / (1.0 + a.abs());
        [
            t.i0 - integrate(|x| cdf(a * x + b) * pdf(x), -14.0, 14.0, panel),
            t.i1 - integrate(|x| x * pdf(a * x + b) * pdf(x), -14.0, 14.0, panel),
            t.i2 - integrate(|x| x * x * cdf(a * x + b) * pdf(x), -14.0, 14.0, panel),
        ]
    }));
    CheckResult::new("gaussian_identities", residual, 1e-10, 100)
}

/// `E[X | X > c] = phi(c) / (1 - Phi(c))`, the Mills ratio at `-c`, from
/// `c = -5` deep into the upper tail.
fn truncated_mean_identity(opts: &VerifyOptions) -> CheckResult {
    let cuts: Vec<f64> = (0..=100).map(|i| -5.0 + 0.5 * i as f64).collect();
    let residual = max_abs(cuts.iter().map(|&c| {
        // weight exp(-(x^2 - c^2)/2) keeps both integrals O(1)
        let w = |x: f64| (-(x - c) * (x + c) / 2.0).exp();
        let hi = if c < 1.0 { 12.0 } else { c + (40.0 / c).min(12.0) };
        let panel = (hi - c) / 64.0;
        let quad = integrate(|x| x * w(x), c, hi, panel) / integrate(w, c, hi, panel);
        (mills_with_crossover(-c, opts.mills_crossover) - quad) / quad.abs().max(1.0)
    }));
    CheckResult::new("truncated_mean_identity", residual, 1e-10, cuts.len() as u64)
}

fn density_u_moments(opts: &VerifyOptions) -> [CheckResult; 2] {
    let mut u = Uniforms::new(opts.seed, 2);
    let (mut mass_res, mut m2_res) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = u.design();
        let c = TheoryContext::new(d, 3.0 * u.draw()[0]).expect("theta >= 0");
        let s = c.sigma_star_sq.sqrt();
        let (lo, hi) = (-12.0 * s - c.theta, 12.0 * s + c.theta);
        let mass = integrate(|x| density_u(&c, x), lo, hi, s / 2.0);
        let m2 = integrate(|x| x * x * density_u(&c, x), lo, hi, s / 2.0);
        mass_res = max_abs([mass_res, mass - 1.0]);
        m2_res = max_abs([m2_res, m2 - second_moment_u(&c)]);
    }
    [
        CheckResult::new("density_u_normalization", mass_res, 1e-10, 50),
        CheckResult::new("density_u_second_moment", m2_res, 1e-8, 50),
    ]
}

fn conditional_s1_mean(opts: &VerifyOptions) -> CheckResult {
    let mut u = Uniforms::new(opts.seed, 3);
    let residual = max_abs((0..50).map(|_| {
        let d = u.design();
        let [t, a, b, _] = u.draw();
        let c = TheoryContext::new(d, 3.0 * t).expect("theta >= 0");
        let (d1, d2) = (-2.0 * a, 4.0 * b - 2.0);
        let mix = S1Mixture::new(&c, d1, d2);
        let (m, span) = (mix.mean(), 14.0 * mix.sd + c.theta);
        let mean = integrate(|s| s * cond_density_s1(&c, d1, d2, s), m - span, m + span, mix.sd / 2.0);
        mean - cond_expect_s1(&c, d1, d2)
    }));
    CheckResult::new("conditional_s1_mean", residual, 1e-8, 50)
}

fn psi_theta_identity(opts: &VerifyOptions) -> CheckResult {
    let mut u = Uniforms::new(opts.seed, 4);
    let residual = max_abs((0..opts.fuzz_cases).map(|_| {
        let d = u.design();
        let [t, a, b, _] = u.draw();
        let c = TheoryContext::new(d, 4.0 * t).expect("theta >= 0");
        let (d1, d2) = (-4.0 * a, 8.0 * b - 4.0);
        let want = -cond_expect_s1(&c, d1, d2) - d.n2f() * d2 / (d.n1f() + d.n2f());
        (psi_theta(&c, d1, d2) - want) / (1.0 + want.abs())
    }));
    CheckResult::new("psi_theta_identity", residual, 1e-12, opts.fuzz_cases)
}

fn mle_risk_constancy() -> Result<CheckResult> {
    let mut points = Vec::new();
    for (n1, n2) in [(5, 5), (10, 5), (10, 15)] {
        for sigma in [0.5, 1.0, 3.0] {
            for theta in [0.0, 0.5, 1.0, 2.0, 4.0] {
                points.push((TrialDesign::new(n1, n2, sigma)?, theta));
            }
        }
    }
    let residuals: Vec<f64> = points
        .par_iter()
        .map(|(d, theta)| {
            let r = risk_profile(d, *theta, &QuadratureSpec::default())?;
            Ok(r[EstimatorId::Mle.position()].mse - d.mle_risk())
        })
        .collect::<Result<_>>()?;
    Ok(CheckResult::new("mle_risk_constancy", max_abs(residuals), 1e-6, points.len() as u64))
}

fn umvcue_conditional_unbiasedness(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut u = Uniforms::new(opts.seed, 5);
    let configs: Vec<(TrialDesign, f64, f64)> = (0..10)
        .map(|_| {
            let d = u.design();
            let [a, b, _, _] = u.draw();
            let mu1 = 4.0 * a - 2.0;
            (d, mu1, mu1 + 3.0 * d.stage1_sd() * (2.0 * b - 1.0))
        })
        .collect();
    let residuals: Vec<f64> = configs
        .par_iter()
        .flat_map_iter(|&(d, mu1, mu2)| {
            [Arm::One, Arm::Two].map(|arm| {
                conditional_bias_quadrature(&d, mu1, mu2, EstimatorId::Umvcue, arm, &QuadratureSpec::default())
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(CheckResult::new("umvcue_conditional_unbiasedness", max_abs(residuals), 1e-6, 20))
}

const DOMINANCE_SLACK: f64 = 1e-8;

/// Largest value of `mse(worse) - mse(better)` over the grid, or of
/// `mse(MLE) - min(others)` for the minimality observation.
fn dominance() -> Result<Vec<CheckResult>> {
    let mut points = Vec::new();
    for (n1, n2) in [(5, 5), (10, 5), (10, 10), (10, 15)] {
        for i in 0..=12 {
            points.push((TrialDesign::new(n1, n2, 1.0)?, 0.25 * i as f64));
        }
    }
    let profiles: Vec<[RiskValue; 7]> = points
        .par_iter()
        .map(|(d, theta)| risk_profile(d, *theta, &QuadratureSpec::default()))
        .collect::<std::result::Result<_, _>>()?;
    let cases = profiles.len() as u64;
    let gap = |a: EstimatorId, b: EstimatorId| {
        profiles
            .iter()
            .map(|p| p[a.position()].mse - p[b.position()].mse)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    use EstimatorId::*;
    let mle_excess = profiles
        .iter()
        .map(|p| {
            let best_other = p.iter().skip(1).map(|r| r.mse).fold(f64::INFINITY, f64::min);
            p[Mle.position()].mse - best_other
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        CheckResult::new("dominance_umvcue_improved", gap(UmvcueImproved, Umvcue), DOMINANCE_SLACK, cases),
        CheckResult::new("dominance_single_stage_improved", gap(SingleStageImproved, SingleStage), DOMINANCE_SLACK, cases),
        CheckResult::new("dominance_rao_blackwell", gap(SingleStageRb, SingleStage), DOMINANCE_SLACK, cases),
        CheckResult::new("observed_delta1_below_rb", gap(Delta1, SingleStageRb), DOMINANCE_SLACK, cases).observation(),
        CheckResult::new("observed_mle_minimal", mle_excess, DOMINANCE_SLACK, cases).observation(),
    ])
}

fn random_observation(u: &mut Uniforms) -> TwoStageObservation {
    let [a, b, c, s] = u.draw();
    let spread = 0.01 + 3.0 * s;
    let x = |p: f64| spread * (2.0 * p - 1.0);
    let (x1, x2) = if a == b { (x(a), x(b) + spread * 1e-3) } else { (x(a), x(b)) };
    TwoStageObservation::new(x1, x2, x(c)).expect("finite means")
}

fn equivariance(opts: &VerifyOptions) -> Result<[CheckResult; 2]> {
    let mut u = Uniforms::new(opts.seed, 6);
    let (mut shift_res, mut perm_res) = (0.0f64, 0.0f64);
    for _ in 0..opts.fuzz_cases {
        let d = u.design();
        let o = random_observation(&mut u);
        let b = 200.0 * u.draw()[0] - 100.0;
        let moved_obs = o.shifted(b);
        let (s0, s1) = (reduce(&d, &o)?, reduce(&d, &moved_obs)?);
        for id in EstimatorId::ALL {
            let base = estimate(id, &d, &o)?;
            let moved = estimate(id, &d, &moved_obs)?;
            // rounding may carry a point across a branch boundary
            let flipped = match id {
                EstimatorId::UmvcueImproved | EstimatorId::SingleStageImproved => {
                    (base == pooled_mean(&d, &o)) != (moved == pooled_mean(&d, &moved_obs))
                }
                EstimatorId::Delta1 => (s0.t1 <= s0.t2) != (s1.t1 <= s1.t2),
                _ => false,
            };
            if !flipped {
                shift_res = max_abs([shift_res, moved - base - b]);
            }
            perm_res = max_abs([perm_res, base - estimate(id, &d, &o.swapped())?]);
        }
    }
    Ok([
        CheckResult::new("location_equivariance", shift_res, 1e-9, opts.fuzz_cases),
        CheckResult::new("permutation_invariance", perm_res, 0.0, opts.fuzz_cases),
    ])
}

fn improvement_rule_identity(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut u = Uniforms::new(opts.seed, 7);
    let mut residual = 0.0f64;
    for _ in 0..opts.fuzz_cases {
        let d = u.design();
        let o = random_observation(&mut u);
        residual = max_abs([
            residual,
            umvcue_improved(&d, &o)? - improve_equivariant(&psi_bg(&d), &d, &o)?,
            single_stage_improved(&d, &o)? - improve_equivariant(&psi_single_stage(&d), &d, &o)?,
        ]);
    }
    Ok(CheckResult::new("improvement_rule_identity", residual, 0.0, opts.fuzz_cases))
}

fn sweep_determinism(opts: &VerifyOptions) -> Result<CheckResult> {
    let config = SweepConfig {
        design: TrialDesign::new(5, 10, 1.0)?,
        theta_grid: vec![0.0, 0.7, 2.0],
        replications: 20_000,
        seed: opts.seed,
        estimators: EstimatorId::ALL.to_vec(),
        crn: true,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| run_sweep(&config))
    };
    let (a, b) = (run(1)?, run(4)?);
    let residual = max_abs(a.cells.iter().zip(&b.cells).flat_map(|(x, y)| {
        [x.mse - y.mse, x.bias - y.bias, x.mse_se - y.mse_se, x.bias_se - y.bias_se]
    }));
    let residual = if a.cells.len() == b.cells.len() { residual } else { f64::NAN };
    Ok(CheckResult::new("sweep_determinism", residual, 0.0, a.cells.len() as u64))
}

pub fn run_checks(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = vec![gaussian_identities(opts), truncated_mean_identity(opts)];
    checks.extend(density_u_moments(opts));
    checks.push(conditional_s1_mean(opts));
    checks.push(psi_theta_identity(opts));
    checks.push(mle_risk_constancy()?);
    checks.push(umvcue_conditional_unbiasedness(opts)?);
    checks.extend(dominance()?);
    checks.extend(equivariance(opts)?);
    checks.push(improvement_rule_identity(opts)?);
    checks.push(sweep_determinism(opts)?);
    let passed = checks.iter().all(|c| c.passed || !c.gating);
    Ok(VerifyReport { passed, checks })
}
