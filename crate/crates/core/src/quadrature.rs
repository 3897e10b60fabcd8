//! Deterministic quadrature: Gauss–Hermite expectations of functions of
//! independent standard normals, and composite Gauss–Legendre on finite
//! intervals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Nodes per axis.
    pub node_count: usize,
    /// Integration half-width in standard deviations for the truncated
    /// (Gauss–Legendre) oracles.
    pub truncation_halfwidth: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: 80,
            truncation_halfwidth: 10.0,
        }
    }
}

impl QuadratureSpec {
    pub fn new(node_count: usize, truncation_halfwidth: f64) -> Result<Self> {
        let spec = Self {
            node_count,
            truncation_halfwidth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 16 {
            return Err(Error::InvalidQuadrature(format!(
                "node_count must be >= 16 (got {})",
                self.node_count
            )));
        }
        if !(self.truncation_halfwidth >= 8.0) || !self.truncation_halfwidth.is_finite() {
            return Err(Error::InvalidQuadrature(format!(
                "truncation_halfwidth must be >= 8 (got {})",
                self.truncation_halfwidth
            )));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self {
            node_count: self.node_count * 2,
            ..*self
        }
    }
}

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`: the physicists' rule
/// rescaled by `x = sqrt(2) t`, `w / sqrt(pi)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    pub fn new(n: usize) -> Self {
        let (t, w) = physicists_hermite(n);
        let scale = 1.0 / PI.sqrt();
        Self {
            nodes: t.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|w| w * scale).collect(),
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

// Newton iteration on the orthonormal Hermite recurrence, with the usual
// asymptotic starting guesses for the largest roots. Nodes are returned in
// ascending order.
fn physicists_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..m {
        nodes.push(-x[i]);
        weights.push(w[i]);
    }
    for i in (0..n / 2).rev() {
        nodes.push(x[i]);
        weights.push(w[i]);
    }
    (nodes, weights)
}

/// `E[f(Z_1, .., Z_k)]` for independent standard normals, by tensor-product
/// Gauss–Hermite with `spec.node_count` nodes per axis. Summation runs in a
/// fixed node order.
pub fn gauss_hermite_expect(
    f: impl Fn(&[f64]) -> f64,
    k: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return Err(Error::Dimension(k));
    }
    spec.validate()?;
    let rule = HermiteRule::new(spec.node_count);
    let (xs, ws) = (&rule.nodes, &rule.weights);
    let mut point = [0.0; 3];
    let mut total = 0.0;
    match k {
        1 => {
            for (&x, &w) in xs.iter().zip(ws) {
                point[0] = x;
                total += w * f(&point[..1]);
            }
        }
        2 => {
            for (&x0, &w0) in xs.iter().zip(ws) {
                let mut inner = 0.0;
                for (&x1, &w1) in xs.iter().zip(ws) {
                    point[0] = x0;
                    point[1] = x1;
                    inner += w1 * f(&point[..2]);
                }
                total += w0 * inner;
            }
        }
        _ => {
            for (&x0, &w0) in xs.iter().zip(ws) {
                let mut middle = 0.0;
                for (&x1, &w1) in xs.iter().zip(ws) {
                    let mut inner = 0.0;
                    for (&x2, &w2) in xs.iter().zip(ws) {
                        point = [x0, x1, x2];
                        inner += w2 * f(&point);
                    }
                    middle += w1 * inner;
                }
                total += w0 * middle;
            }
        }
    }
    Ok(total)
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LegendreRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Composite rule: `[a, b]` is cut into equal panels no wider than
    /// `max_panel`, each integrated with this rule.
    pub fn integrate(&self, a: f64, b: f64, max_panel: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            let mut s = 0.0;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                s += w * f(mid + half * x);
            }
            total += half * s;
        }
        total
    }

    /// Same panelling as [`integrate`](Self::integrate), but hands each
    /// absolute node and weight to `visit`.
    pub fn for_each_node(&self, a: f64, b: f64, max_panel: f64, mut visit: impl FnMut(f64, f64)) {
        if !(b > a) {
            return;
        }
        let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                visit(mid + half * x, half * w);
            }
        }
    }
}

/// `∫ f(x) dx` over `center ± halfwidth * scale`, composite Gauss–Legendre
/// with panels of at most 2 scale units. Intended for integrands carrying a
/// Gaussian factor of width `scale` around `center`.
pub fn integrate_gaussian_line(
    f: impl FnMut(f64) -> f64,
    center: f64,
    scale: f64,
    spec: &QuadratureSpec,
) -> f64 {
    let rule = LegendreRule::new(panel_nodes(spec));
    let h = spec.truncation_halfwidth * scale;
    rule.integrate(center - h, center + h, 2.0 * scale, f)
}

/// Gauss–Legendre nodes per panel implied by a spec.
pub(crate) fn panel_nodes(spec: &QuadratureSpec) -> usize {
    (spec.node_count / 8).max(8)
}
