//! Seeded Monte Carlo sweeps over `theta` at the canonical point `(0, theta)`.
//!
//! Replications are processed in fixed-size chunks; chunk partial sums are
//! combined in chunk order, so results do not depend on the number of
//! worker threads. With common random numbers every estimator and every
//! `theta` read the same normals (lane 0). Without them each
//! `(theta, estimator)` pair reads its own lane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{evaluate, evaluate_all, EstimatorId};
use crate::model::{observation_from_normals, reduce_ordered, ParameterPoint, TrialDesign, TwoStageObservation};
use crate::stream::StreamKey;

const CHUNK: u64 = 8192;
pub const MIN_REPLICATIONS: u64 = 1000;

/// The six `(n1, n2)` pairs of the risk and bias figures.
pub const FIGURE_DESIGNS: [(u32, u32); 6] = [(5, 5), (10, 10), (5, 10), (10, 15), (10, 5), (15, 10)];

/// Table 1 layout.
pub const TABLE1_THETAS: [f64; 11] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const TABLE1_DESIGNS: [(u32, u32); 4] = [(5, 5), (10, 5), (10, 10), (10, 15)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub design: TrialDesign,
    pub theta_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    pub crn: bool,
}

impl SweepConfig {
    /// Figure defaults for one design: `theta` in `[0, 3]` step 0.1 and the
    /// five figure estimators, with common random numbers.
    pub fn figures(design: TrialDesign, replications: u64, seed: u64) -> Self {
        Self {
            design,
            theta_grid: theta_grid(0.0, 3.0, 0.1).expect("static grid"),
            replications,
            seed,
            estimators: EstimatorId::FIGURE_SET.to_vec(),
            crn: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::InvalidSweep(format!(
                "replications must be >= {MIN_REPLICATIONS} (got {})",
                self.replications
            )));
        }
        validate_grid(&self.theta_grid)?;
        if self.estimators.is_empty() {
            return Err(Error::InvalidSweep("estimator set is empty".into()));
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidSweep("theta grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidSweep(format!("theta must be finite and >= 0 (got {bad})")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSweep("theta grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `min, min + step, ...` up to `max` inclusive (with a relative slack of
/// `1e-9 * step` against accumulated rounding).
pub fn theta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidSweep(format!("theta step must be positive (got {step})")));
    }
    if !(min >= 0.0) || !(max >= min) || !max.is_finite() {
        return Err(Error::InvalidSweep(format!("need 0 <= theta-min <= theta-max (got {min}, {max})")));
    }
    let count = ((max - min) / step + 1e-9).floor() as u64 + 1;
    if count > 1_000_000 {
        return Err(Error::InvalidSweep(format!("theta grid would have {count} points")));
    }
    Ok((0..count).map(|i| min + step * i as f64).collect())
}

/// Monte Carlo summary for one `(theta, estimator)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCell {
    pub theta: f64,
    pub estimator: EstimatorId,
    pub mse: f64,
    pub bias: f64,
    /// Standard error of `mse`: sample SD of the squared errors over `sqrt(R)`.
    pub mse_se: f64,
    pub bias_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub design: TrialDesign,
    pub seed: u64,
    pub replications: u64,
    pub crn: bool,
    pub theta_grid: Vec<f64>,
    pub estimators: Vec<EstimatorId>,
    /// Row-major: `cells[t * estimators.len() + e]`.
    pub cells: Vec<RiskCell>,
}

impl RiskCurve {
    pub fn cell(&self, theta_index: usize, id: EstimatorId) -> Option<&RiskCell> {
        let e = self.estimators.iter().position(|&x| x == id)?;
        self.cells.get(theta_index * self.estimators.len() + e)
    }

    /// Long-format rows, two per cell (`mse` then `bias`).
    pub fn rows(&self) -> Vec<FigureRow> {
        let mut out = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            for (metric, value, se) in [(Metric::Mse, c.mse, c.mse_se), (Metric::Bias, c.bias, c.bias_se)] {
                out.push(FigureRow {
                    n1: self.design.n1,
                    n2: self.design.n2,
                    sigma: self.design.sigma,
                    theta: c.theta,
                    estimator: c.estimator,
                    metric,
                    value,
                    se,
                    reps: self.replications,
                    seed: self.seed,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub n1: u32,
    pub n2: u32,
    pub sigma: f64,
    pub theta: f64,
    pub estimator: EstimatorId,
    pub metric: Metric,
    pub value: f64,
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
}

/// Running power sums of the error `e`.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    e: f64,
    e2: f64,
    e4: f64,
}

impl Sums {
    #[inline]
    fn push(&mut self, e: f64) {
        let e2 = e * e;
        self.e += e;
        self.e2 += e2;
        self.e4 += e2 * e2;
    }

    fn merge(&mut self, o: &Sums) {
        self.e += o.e;
        self.e2 += o.e2;
        self.e4 += o.e4;
    }

    fn finish(&self, r: f64, theta: f64, estimator: EstimatorId) -> RiskCell {
        let bias = self.e / r;
        let mse = self.e2 / r;
        let var_e = ((self.e2 - r * bias * bias) / (r - 1.0)).max(0.0);
        let var_e2 = ((self.e4 - r * mse * mse) / (r - 1.0)).max(0.0);
        RiskCell {
            theta,
            estimator,
            mse,
            bias,
            mse_se: (var_e2 / r).sqrt(),
            bias_se: (var_e / r).sqrt(),
        }
    }
}

fn chunks(replications: u64) -> Vec<(u64, u64)> {
    (0..replications.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(replications)))
        .collect()
}

/// Chunked, order-stable parallel reduction over replications.
fn reduce_chunks<T: Send + Sync + Clone>(
    replications: u64,
    zero: T,
    work: impl Fn(u64, u64, &mut T) + Sync,
    merge: impl Fn(&mut T, &T),
) -> T {
    let partials: Vec<T> = chunks(replications)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = zero.clone();
            work(lo, hi, &mut acc);
            acc
        })
        .collect();
    let mut total = zero;
    for p in &partials {
        merge(&mut total, p);
    }
    total
}

#[inline]
fn draw(design: &TrialDesign, truth: &ParameterPoint, z: [f64; 3]) -> (TwoStageObservation, f64) {
    let obs = observation_from_normals(design, truth, z);
    (obs, truth.mean(obs.selected))
}

#[inline]
fn errors_all(design: &TrialDesign, obs: &TwoStageObservation, target: f64) -> [f64; 7] {
    let (hi, lo) = (obs.xbar1.max(obs.xbar2), obs.xbar1.min(obs.xbar2));
    let s = reduce_ordered(design, hi, lo, obs.ybar);
    evaluate_all(design, &s).map(|v| v - target)
}

#[inline]
fn error_one(id: EstimatorId, design: &TrialDesign, obs: &TwoStageObservation, target: f64) -> f64 {
    let (hi, lo) = (obs.xbar1.max(obs.xbar2), obs.xbar1.min(obs.xbar2));
    evaluate(id, design, &reduce_ordered(design, hi, lo, obs.ybar)) - target
}

fn lane(crn: bool, theta_index: usize, estimator_index: usize) -> u64 {
    if crn {
        0
    } else {
        1 + (theta_index * EstimatorId::ALL.len() + estimator_index) as u64
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<RiskCurve> {
    config.validate()?;
    let d = config.design;
    let r = config.replications;
    let mut cells = Vec::with_capacity(config.theta_grid.len() * config.estimators.len());
    for (ti, &theta) in config.theta_grid.iter().enumerate() {
        let truth = ParameterPoint::from_gap(theta);
        let sums: Vec<Sums> = if config.crn {
            let key = StreamKey::new(config.seed, lane(true, ti, 0));
            let all = reduce_chunks(
                r,
                [Sums::default(); 7],
                |lo, hi, acc| {
                    let mut cursor = key.at(lo);
                    for _ in lo..hi {
                        let (obs, target) = draw(&d, &truth, cursor.next_replication());
                        for (a, e) in acc.iter_mut().zip(errors_all(&d, &obs, target)) {
                            a.push(e);
                        }
                    }
                },
                |t, p| t.iter_mut().zip(p).for_each(|(a, b)| a.merge(b)),
            );
            config.estimators.iter().map(|id| all[id.position()]).collect()
        } else {
            config
                .estimators
                .iter()
                .map(|&id| {
                    let key = StreamKey::new(config.seed, lane(false, ti, id.position()));
                    reduce_chunks(
                        r,
                        Sums::default(),
                        |lo, hi, acc| {
                            let mut cursor = key.at(lo);
                            for _ in lo..hi {
                                let (obs, target) = draw(&d, &truth, cursor.next_replication());
                                acc.push(error_one(id, &d, &obs, target));
                            }
                        },
                        |t, p| t.merge(p),
                    )
                })
                .collect()
        };
        for (s, &id) in sums.iter().zip(&config.estimators) {
            cells.push(s.finish(r as f64, theta, id));
        }
    }
    Ok(RiskCurve {
        design: d,
        seed: config.seed,
        replications: r,
        crn: config.crn,
        theta_grid: config.theta_grid.clone(),
        estimators: config.estimators.clone(),
        cells,
    })
}

/// Paired comparison of two estimators' squared errors at one `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedRisk {
    pub base_mse: f64,
    pub improved_mse: f64,
    /// `base_mse - improved_mse`
    pub difference: f64,
    pub difference_se: f64,
    /// `100 * difference / base_mse`
    pub percent: f64,
    /// Delta-method standard error of `percent`.
    pub percent_se: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    a: f64,
    b: f64,
    aa: f64,
    bb: f64,
    ab: f64,
}

impl PairSums {
    fn merge(&mut self, o: &PairSums) {
        self.a += o.a;
        self.b += o.b;
        self.aa += o.aa;
        self.bb += o.bb;
        self.ab += o.ab;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn paired_risk(
    design: &TrialDesign,
    theta: f64,
    base: EstimatorId,
    improved: EstimatorId,
    replications: u64,
    seed: u64,
    crn: bool,
    theta_index: usize,
) -> Result<PairedRisk> {
    design.validate()?;
    validate_grid(&[theta])?;
    if replications < MIN_REPLICATIONS {
        return Err(Error::InvalidSweep(format!(
            "replications must be >= {MIN_REPLICATIONS} (got {replications})"
        )));
    }
    let truth = ParameterPoint::from_gap(theta);
    let key_a = StreamKey::new(seed, lane(crn, theta_index, base.position()));
    let key_b = StreamKey::new(seed, lane(crn, theta_index, improved.position()));
    let s = reduce_chunks(
        replications,
        PairSums::default(),
        |lo, hi, acc| {
            let mut ca = key_a.at(lo);
            let mut cb = key_b.at(lo);
            for _ in lo..hi {
                let (ea, eb) = if crn {
                    let (obs, target) = draw(design, &truth, ca.next_replication());
                    (error_one(base, design, &obs, target), error_one(improved, design, &obs, target))
                } else {
                    let (oa, ta) = draw(design, &truth, ca.next_replication());
                    let (ob, tb) = draw(design, &truth, cb.next_replication());
                    (error_one(base, design, &oa, ta), error_one(improved, design, &ob, tb))
                };
                let (a, b) = (ea * ea, eb * eb);
                acc.a += a;
                acc.b += b;
                acc.aa += a * a;
                acc.bb += b * b;
                acc.ab += a * b;
            }
        },
        |t, p| t.merge(p),
    );
    let r = replications as f64;
    let (ma, mb) = (s.a / r, s.b / r);
    let var_a = ((s.aa - r * ma * ma) / (r - 1.0)).max(0.0) / r;
    let var_b = ((s.bb - r * mb * mb) / (r - 1.0)).max(0.0) / r;
    let cov = if crn { (s.ab - r * ma * mb) / (r - 1.0) / r } else { 0.0 };
    let var_diff = (var_a + var_b - 2.0 * cov).max(0.0);
    // percent = 100 (1 - mb/ma)
    let grad_a = mb / (ma * ma);
    let grad_b = -1.0 / ma;
    let var_pct = grad_a * grad_a * var_a + grad_b * grad_b * var_b + 2.0 * grad_a * grad_b * cov;
    Ok(PairedRisk {
        base_mse: ma,
        improved_mse: mb,
        difference: ma - mb,
        difference_se: var_diff.sqrt(),
        percent: 100.0 * (ma - mb) / ma,
        percent_se: 100.0 * var_pct.max(0.0).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub base: EstimatorId,
    pub improved: EstimatorId,
    pub designs: Vec<(u32, u32)>,
    pub theta_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    /// `rows[theta][design]`
    pub rows: Vec<Vec<PairedRisk>>,
}

/// Percentage risk improvement of `improved` over `base`, with common
/// random numbers, at `sigma = 1`. Values are reported raw (never clipped).
pub fn improvement_table(
    base: EstimatorId,
    improved: EstimatorId,
    designs: &[(u32, u32)],
    theta_grid: &[f64],
    replications: u64,
    seed: u64,
) -> Result<ImprovementTable> {
    validate_grid(theta_grid)?;
    if designs.is_empty() {
        return Err(Error::InvalidSweep("design list is empty".into()));
    }
    let designs_checked = designs
        .iter()
        .map(|&(n1, n2)| TrialDesign::new(n1, n2, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let rows = theta_grid
        .iter()
        .enumerate()
        .map(|(ti, &theta)| {
            designs_checked
                .iter()
                .map(|d| paired_risk(d, theta, base, improved, replications, seed, true, ti))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImprovementTable {
        base,
        improved,
        designs: designs.to_vec(),
        theta_grid: theta_grid.to_vec(),
        replications,
        seed,
        rows,
    })
}

/// Long-format MSE and bias rows for every figure design, reusing the grid,
/// replications, seed, estimator set, `sigma` and CRN flag of `config`.
pub fn figure_data(config: &SweepConfig) -> Result<Vec<FigureRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (n1, n2) in FIGURE_DESIGNS {
        let cfg = SweepConfig {
            design: TrialDesign::new(n1, n2, config.design.sigma)?,
            ..config.clone()
        };
        rows.extend(run_sweep(&cfg)?.rows());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(crn: bool) -> SweepConfig {
        SweepConfig {
            design: TrialDesign::new(5, 5, 1.0).unwrap(),
            theta_grid: vec![0.0, 0.5, 1.5],
            replications: 20_000,
            seed: 7,
            estimators: EstimatorId::ALL.to_vec(),
            crn,
        }
    }

    #[test]
    fn grid_construction() {
        let g = theta_grid(0.0, 3.0, 0.1).unwrap();
        assert_eq!(g.len(), 31);
        assert!((g[30] - 3.0).abs() < 1e-12);
        assert_eq!(theta_grid(0.5, 0.5, 1.0).unwrap(), vec![0.5]);
        assert!(theta_grid(0.0, 1.0, 0.0).is_err());
        assert!(theta_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = config(true);
        c.replications = 999;
        assert!(c.validate().is_err());
        let mut c = config(true);
        c.theta_grid = vec![0.5, 0.2];
        assert!(c.validate().is_err());
        c.theta_grid.clear();
        assert!(c.validate().is_err());
        let mut c = config(true);
        c.estimators.clear();
        assert!(run_sweep(&c).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_thread_independent() {
        let a = run_sweep(&config(true)).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_sweep(&config(true)).unwrap());
        assert_eq!(a, b);
        let c = run_sweep(&config(false)).unwrap();
        assert_eq!(c, run_sweep(&config(false)).unwrap());
    }

    #[test]
    fn curve_invariants() {
        let curve = run_sweep(&config(true)).unwrap();
        assert_eq!(curve.cells.len(), 21);
        for c in &curve.cells {
            assert!(c.mse >= 0.0 && c.mse_se > 0.0 && c.bias * c.bias <= c.mse);
        }
        let mle = curve.cell(1, EstimatorId::Mle).unwrap();
        assert!((mle.mse - 0.1).abs() < 4.0 * mle.mse_se);
        assert_eq!(curve.rows().len(), 42);
    }

    #[test]
    fn crn_shares_draws_across_estimators() {
        let curve = run_sweep(&config(true)).unwrap();
        // paired comparisons under CRN read the sweep's lane
        let c0 = curve.cell(0, EstimatorId::SingleStage).unwrap();
        let p = paired_risk(&curve.design, 0.0, EstimatorId::SingleStage, EstimatorId::SingleStage, 20_000, 7, true, 0)
            .unwrap();
        assert_eq!(p.base_mse, c0.mse);
        assert_eq!(p.difference, 0.0);
    }
}
