use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use selmean_core::estimators::{
    estimate, improve_equivariant, mle, pooled_mean, psi_bg, psi_single_stage, single_stage_improved, single_stage_rb,
    umvcue, umvcue_improved, EstimatorId,
};
use selmean_core::model::{reduce, TrialDesign, TwoStageObservation};
use selmean_core::theory::{cond_expect_s1, psi_theta, TheoryContext};

fn design_strategy() -> impl Strategy<Value = TrialDesign> {
    (1u32..60, 1u32..60, 0.05f64..20.0).prop_map(|(n1, n2, s)| TrialDesign::new(n1, n2, s).unwrap())
}

fn obs_strategy() -> impl Strategy<Value = TwoStageObservation> {
    (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0)
        .prop_filter("distinct stage-1 means", |(a, b, _)| a != b)
        .prop_map(|(a, b, y)| TwoStageObservation::new(a, b, y).unwrap())
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn location_equivariance(d in design_strategy(), o in obs_strategy(), b in -100.0f64..100.0) {
        let moved_obs = o.shifted(b);
        let (s0, s1) = (reduce(&d, &o).unwrap(), reduce(&d, &moved_obs).unwrap());
        for id in EstimatorId::ALL {
            let base = estimate(id, &d, &o).unwrap();
            let moved = estimate(id, &d, &moved_obs).unwrap();
            // rounding may carry a point across a pooling boundary
            let flipped = match id {
                EstimatorId::UmvcueImproved | EstimatorId::SingleStageImproved => {
                    (base == pooled_mean(&d, &o)) != (moved == pooled_mean(&d, &moved_obs))
                }
                EstimatorId::Delta1 => (s0.t1 <= s0.t2) != (s1.t1 <= s1.t2),
                _ => false,
            };
            if !flipped {
                prop_assert!((moved - base - b).abs() <= 1e-9, "{}: {} + {} != {}", id, base, b, moved);
            }
        }
    }

    #[test]
    fn permutation_invariance(d in design_strategy(), o in obs_strategy()) {
        for id in EstimatorId::ALL {
            prop_assert_eq!(estimate(id, &d, &o).unwrap(), estimate(id, &d, &o.swapped()).unwrap());
        }
    }

    #[test]
    fn ordering_against_mle(d in design_strategy(), o in obs_strategy()) {
        let s = reduce(&d, &o).unwrap();
        prop_assert!(umvcue(&d, &s) <= mle(&s));
        prop_assert!(single_stage_rb(&d, &s) >= mle(&s));
        if s.q < 5.0 {
            prop_assert!(umvcue(&d, &s) < mle(&s));
        }
        if (s.t1 - s.t2) / d.conditional_winner_sd() < 5.0 {
            prop_assert!(single_stage_rb(&d, &s) > mle(&s));
        }
    }

    #[test]
    fn all_estimates_are_finite(d in design_strategy(), o in obs_strategy()) {
        for id in EstimatorId::ALL {
            prop_assert!(estimate(id, &d, &o).unwrap().is_finite());
        }
    }
}

#[test]
fn improved_estimators_equal_generic_rule_on_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100_000 {
        let d = TrialDesign::new(
            1 + (rng.next_u32() % 40),
            1 + (rng.next_u32() % 40),
            uniform(&mut rng, 0.1, 5.0),
        )
        .unwrap();
        let spread = uniform(&mut rng, 0.01, 3.0);
        let o = TwoStageObservation::new(
            uniform(&mut rng, -spread, spread),
            uniform(&mut rng, -spread, spread),
            uniform(&mut rng, -spread, spread),
        )
        .unwrap();
        assert_eq!(
            umvcue_improved(&d, &o).unwrap(),
            improve_equivariant(&psi_bg(&d), &d, &o).unwrap(),
            "{d:?} {o:?}"
        );
        assert_eq!(
            single_stage_improved(&d, &o).unwrap(),
            improve_equivariant(&psi_single_stage(&d), &d, &o).unwrap(),
            "{d:?} {o:?}"
        );
    }
}

#[test]
fn psi_theta_matches_conditional_expectation_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let d = TrialDesign::new(1 + rng.next_u32() % 30, 1 + rng.next_u32() % 30, uniform(&mut rng, 0.2, 4.0)).unwrap();
        let ctx = TheoryContext::new(d, uniform(&mut rng, 0.0, 4.0)).unwrap();
        let d1 = uniform(&mut rng, -4.0, 0.0);
        let d2 = uniform(&mut rng, -4.0, 4.0);
        let want = -cond_expect_s1(&ctx, d1, d2) - d.n2f() * d2 / (d.n1f() + d.n2f());
        let got = psi_theta(&ctx, d1, d2);
        assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    }
}
