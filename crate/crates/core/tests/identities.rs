//! Closed forms checked against direct numerical integration.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use selmean_core::model::TrialDesign;
use selmean_core::normal::{cdf, pdf, phi_phi_moments};
use selmean_core::quadrature::LegendreRule;
use selmean_core::theory::{
    cond_density_s1, cond_expect_s1, conditional_risk_r1, density_u, psi_bounds, psi_theta, psi_zero,
    second_moment_u, S1Mixture, TheoryContext,
};

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panel: f64) -> f64 {
    LegendreRule::new(24).integrate(lo, hi, panel, f)
}

fn random_context(rng: &mut ChaCha8Rng) -> TheoryContext {
    let d = TrialDesign::new(1 + rng.next_u32() % 25, 1 + rng.next_u32() % 25, uniform(rng, 0.3, 3.0)).unwrap();
    TheoryContext::new(d, uniform(rng, 0.0, 3.0)).unwrap()
}

#[test]
fn gaussian_identities_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (a, b) = (uniform(&mut rng, -4.0, 4.0), uniform(&mut rng, -4.0, 4.0));
        let t = phi_phi_moments(a, b).unwrap();
        let panel = 0.25 / (1.0 + a.abs());
        let i0 = integrate(|x| cdf(a * x + b) * pdf(x), -14.0, 14.0, panel);
        let i1 = integrate(|x| x * pdf(a * x + b) * pdf(x), -14.0, 14.0, panel);
        let i2 = integrate(|x| x * x * cdf(a * x + b) * pdf(x), -14.0, 14.0, panel);
        assert!((t.i0 - i0).abs() < 1e-10, "i0 at ({a}, {b})");
        assert!((t.i1 - i1).abs() < 1e-10, "i1 at ({a}, {b})");
        assert!((t.i2 - i2).abs() < 1e-10, "i2 at ({a}, {b})");
    }
}

#[test]
fn density_u_normalization_and_second_moment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let c = random_context(&mut rng);
        let s = c.sigma_star_sq.sqrt();
        let (lo, hi) = (-12.0 * s - c.theta, 12.0 * s + c.theta);
        let mass = integrate(|u| density_u(&c, u), lo, hi, s / 2.0);
        let m2 = integrate(|u| u * u * density_u(&c, u), lo, hi, s / 2.0);
        assert!((mass - 1.0).abs() < 1e-10, "{c:?}: mass {mass}");
        assert!((m2 - second_moment_u(&c)).abs() < 1e-8, "{c:?}: m2 {m2}");
    }
}

#[test]
fn conditional_density_closed_form_matches_ratio_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let c = random_context(&mut rng);
        let (n1, n2, sigma, theta) = (c.design.n1f(), c.design.n2f(), c.design.sigma, c.theta);
        let d1 = uniform(&mut rng, -2.0, 0.0);
        let d2 = uniform(&mut rng, -2.0, 2.0);
        let (a1, a2) = (n1.sqrt() / sigma, n2.sqrt() / sigma);
        let kernel = |s: f64| {
            (pdf(a1 * (s + d1 - theta)) + pdf(a1 * (s + d1 + theta))) * pdf(a2 * (s + d2)) * pdf(a1 * s)
        };
        let mix = S1Mixture::new(&c, d1, d2);
        let centre = mix.mean();
        let span = 14.0 * mix.sd + theta;
        let panel = mix.sd / 2.0;
        let norm = integrate(kernel, centre - span, centre + span, panel);
        let mass = integrate(|s| cond_density_s1(&c, d1, d2, s), centre - span, centre + span, panel);
        assert!((mass - 1.0).abs() < 1e-10);
        for k in -3..=3 {
            let s = centre + k as f64 * mix.sd;
            let ratio = kernel(s) / norm;
            let closed = cond_density_s1(&c, d1, d2, s);
            assert!((ratio - closed).abs() < 1e-8 * (1.0 + closed), "{c:?} s = {s}: {ratio} vs {closed}");
        }
        let mean = integrate(|s| s * cond_density_s1(&c, d1, d2, s), centre - span, centre + span, panel);
        assert!((mean - cond_expect_s1(&c, d1, d2)).abs() < 1e-8);
    }
}

#[test]
fn psi_theta_minimises_conditional_risk() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let c = random_context(&mut rng);
        let d1 = uniform(&mut rng, -2.0, 0.0);
        let d2 = uniform(&mut rng, -2.0, 2.0);
        let f = |x: f64| conditional_risk_r1(&c, d1, d2, x);
        // golden-section search on a bracket wide enough for any shift here
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (-20.0, 20.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while b - a > 1e-6 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        // finish with one parabolic step: R1 is quadratic in the shift, and
        // comparisons of nearly equal values stall golden-section at ~1e-8
        let x = 0.5 * (a + b);
        let h = 1e-3;
        let (fl, fm, fr) = (f(x - h), f(x), f(x + h));
        let argmin = x - 0.5 * h * (fr - fl) / (fr - 2.0 * fm + fl);
        let psi = psi_theta(&c, d1, d2);
        assert!((argmin - psi).abs() < 1e-8, "{argmin} vs {psi}");

        let mix = S1Mixture::new(&c, d1, d2);
        let span = 14.0 * mix.sd + c.theta;
        let m = mix.mean();
        let var = integrate(
            |s| (s - m) * (s - m) * mix.density(s),
            m - span,
            m + span,
            mix.sd / 2.0,
        );
        assert!((f(psi) - var).abs() < 1e-8);

        let zero = TheoryContext::new(c.design, 0.0).unwrap();
        let at_zero = psi_theta(&zero, d1, d2);
        assert!((at_zero - psi_zero(&c.design, d1, d2)).abs() < 1e-12);
        let b = psi_bounds(&c.design, d1, d2);
        assert!(psi >= b.inf - 1e-12 && psi <= b.sup + 1e-12);
    }
}
