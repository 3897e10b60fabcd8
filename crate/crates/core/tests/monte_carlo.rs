//! Monte Carlo engine against quadrature and closed forms.

use selmean_core::estimators::EstimatorId;
use selmean_core::model::{Arm, ParameterPoint, TrialDesign};
use selmean_core::quadrature::QuadratureSpec;
use selmean_core::sim::{figure_data, paired_risk, run_sweep, Metric, SweepConfig};
use selmean_core::stream::StreamKey;
use selmean_core::theory::{conditional_bias_quadrature, risk_profile};

fn sweep(n1: u32, n2: u32, thetas: &[f64], reps: u64, seed: u64, crn: bool) -> selmean_core::sim::RiskCurve {
    run_sweep(&SweepConfig {
        design: TrialDesign::new(n1, n2, 1.0).unwrap(),
        theta_grid: thetas.to_vec(),
        replications: reps,
        seed,
        estimators: EstimatorId::ALL.to_vec(),
        crn,
    })
    .unwrap()
}

#[test]
fn mc_agrees_with_quadrature_on_smoke_grid() {
    let thetas = [0.0, 0.3, 1.0, 2.0];
    for (n1, n2) in [(5, 5), (10, 5), (10, 15)] {
        let curve = sweep(n1, n2, &thetas, 200_000, 11, true);
        let d = curve.design;
        for (ti, &theta) in thetas.iter().enumerate() {
            let exact = risk_profile(&d, theta, &QuadratureSpec::default()).unwrap();
            for id in EstimatorId::ALL {
                let c = curve.cell(ti, id).unwrap();
                let r = exact[id.position()];
                assert!(
                    (c.mse - r.mse).abs() <= 4.0 * c.mse_se,
                    "({n1},{n2}) theta {theta} {id}: mc {} vs {} (se {})",
                    c.mse,
                    r.mse,
                    c.mse_se
                );
                assert!((c.bias - r.bias).abs() <= 4.0 * c.bias_se, "bias ({n1},{n2}) theta {theta} {id}");
            }
        }
    }
}

#[test]
fn mle_and_umvcue_spot_values() {
    let curve = sweep(5, 5, &[0.0, 1.0, 2.5], 1_000_000, 3, true);
    for ti in 0..3 {
        let c = curve.cell(ti, EstimatorId::Mle).unwrap();
        assert!((c.mse - 0.1).abs() <= 3.0 * c.mse_se, "{c:?}");
    }
    let curve = sweep(10, 10, &[1.0], 1_000_000, 4, true);
    let c = curve.cell(0, EstimatorId::Umvcue).unwrap();
    assert!(c.bias.abs() <= 3.0 * c.bias_se, "{c:?}");
}

#[test]
fn umvcue_bias_vanishes_across_grid() {
    let curve = sweep(10, 5, &[0.0, 0.5, 1.0, 1.5, 2.0, 3.0], 200_000, 5, true);
    for ti in 0..6 {
        let c = curve.cell(ti, EstimatorId::Umvcue).unwrap();
        assert!(c.bias.abs() <= 3.0 * c.bias_se, "{c:?}");
    }
}

#[test]
fn single_stage_risk_at_equal_means_matches_large_mc() {
    let d = TrialDesign::new(5, 5, 1.0).unwrap();
    let exact = risk_profile(&d, 0.0, &QuadratureSpec::default()).unwrap()[EstimatorId::SingleStage.position()];
    let curve = run_sweep(&SweepConfig {
        design: d,
        theta_grid: vec![0.0],
        replications: 10_000_000,
        seed: 99,
        estimators: vec![EstimatorId::SingleStage],
        crn: true,
    })
    .unwrap();
    let c = curve.cells[0];
    assert!((c.mse - exact.mse).abs() <= 3.0 * c.mse_se, "{} vs {} se {}", c.mse, exact.mse, c.mse_se);
}

#[test]
fn mle_conditional_selection_bias_matches_mc() {
    let d = TrialDesign::new(5, 5, 1.0).unwrap();
    let q = conditional_bias_quadrature(&d, 0.0, 0.0, EstimatorId::Mle, Arm::One, &QuadratureSpec::default()).unwrap();
    assert!(q > 0.0);
    let truth = ParameterPoint::new(0.0, 0.0);
    let mut cursor = StreamKey::new(17, 0).at(0);
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for _ in 0..1_000_000 {
        let o = selmean_core::model::sample_observation(&d, &truth, &mut cursor);
        if o.selected == Arm::One {
            let t1 = (5.0 * o.xbar1 + 5.0 * o.ybar) / 10.0;
            n += 1.0;
            s += t1;
            s2 += t1 * t1;
        }
    }
    let mean = s / n;
    let se = ((s2 / n - mean * mean) / n).sqrt();
    assert!((mean - q).abs() <= 3.0 * se, "{mean} vs {q} (se {se})");
}

#[test]
fn crn_reduces_standard_error_of_differences() {
    let d = TrialDesign::new(5, 5, 1.0).unwrap();
    let on = paired_risk(&d, 0.5, EstimatorId::SingleStage, EstimatorId::SingleStageImproved, 100_000, 8, true, 0).unwrap();
    let off =
        paired_risk(&d, 0.5, EstimatorId::SingleStage, EstimatorId::SingleStageImproved, 100_000, 8, false, 0).unwrap();
    assert!(on.difference_se < off.difference_se, "{} vs {}", on.difference_se, off.difference_se);
}

#[test]
fn figure_orderings_and_large_samples() {
    let base = SweepConfig::figures(TrialDesign::new(5, 5, 1.0).unwrap(), 20_000, 21);
    let rows = figure_data(&base).unwrap();
    assert_eq!(rows.len(), 6 * 31 * 5 * 2);
    for (n1, n2) in selmean_core::sim::FIGURE_DESIGNS {
        for ti in 0..31 {
            let pick = |id: EstimatorId| {
                rows.iter()
                    .filter(|r| r.n1 == n1 && r.n2 == n2 && r.estimator == id && r.metric == Metric::Mse)
                    .nth(ti)
                    .copied()
                    .unwrap()
            };
            let (bg, bgi) = (pick(EstimatorId::Umvcue), pick(EstimatorId::UmvcueImproved));
            let combined = (bg.se * bg.se + bgi.se * bgi.se).sqrt();
            assert!(bgi.value <= bg.value + 3.0 * combined, "({n1},{n2}) theta {}", bg.theta);
        }
    }

    let big = sweep(200, 200, &[0.0, 1.0, 3.0], 20_000, 2, true);
    assert!(big.cells.iter().all(|c| c.mse < 0.01));
}

#[test]
fn delta1_beats_mle_near_unit_gap() {
    // Checked independently of the quadrature: at theta = 1 the Rao–Blackwell
    // improved single-stage estimator has smaller MSE than the MLE.
    let curve = sweep(10, 10, &[1.0], 1_000_000, 31, true);
    let m = curve.cell(0, EstimatorId::Mle).unwrap();
    let d1 = curve.cell(0, EstimatorId::Delta1).unwrap();
    let exact = risk_profile(&curve.design, 1.0, &QuadratureSpec::default()).unwrap();
    assert!(exact[EstimatorId::Delta1.position()].mse < exact[EstimatorId::Mle.position()].mse);
    assert!(d1.mse + 5.0 * d1.mse_se < m.mse, "{} vs {}", d1.mse, m.mse);
}
