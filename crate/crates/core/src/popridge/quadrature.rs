use serde::{Deserialize, Serialize};

use crate::dist::MarginDistribution;
use crate::error::{invalid, Result};
use crate::numeric::pairwise_sum;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A composite Gauss–Legendre rule over the support of the input
/// distribution, with the density folded into the weights so that
/// `Σ wⱼ f(zⱼ) ≈ ∫ f dρ_X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
    order: usize,
}

impl QuadratureGrid {
    /// Builds `panels` equal panels per support interval with `order` nodes
    /// each.
    pub fn new(dist: &MarginDistribution, panels: usize, order: usize) -> Result<Self> {
        if panels == 0 {
            return invalid("quadrature needs at least one panel per interval");
        }
        if order < 2 {
            return invalid(format!("quadrature order must be at least 2, got {order}"));
        }
        let (ref_nodes, ref_weights) = gauss_legendre(order);
        let level = dist.density_level();
        let mut nodes = Vec::with_capacity(2 * panels * order);
        let mut weights = Vec::with_capacity(2 * panels * order);
        for (a, b) in dist.support() {
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + h * p as f64;
                for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                    nodes.push(lo + 0.5 * h * (t + 1.0));
                    weights.push(0.5 * h * w * level);
                }
            }
        }
        Ok(Self {
            nodes,
            weights,
            panels,
            order,
        })
    }

    /// Builds a grid directly from nodes and weights (used to inject exact
    /// empirical measures in tests and diagnostics).
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return invalid("quadrature nodes and weights must be non-empty and of equal length");
        }
        if nodes.windows(2).any(|w| w[0] > w[1]) {
            return invalid("quadrature nodes must be sorted ascending");
        }
        Ok(Self {
            nodes,
            weights,
            panels: 0,
            order: 0,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `Σ wⱼ f(zⱼ)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).collect();
        pairwise_sum(&terms)
    }

    /// `Σ wⱼ vⱼ` for precomputed nodal values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        let terms: Vec<f64> = self.weights.iter().zip(values).map(|(w, v)| w * v).collect();
        pairwise_sum(&terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rule_integrates_monomials_exactly() {
        for order in 2..=12 {
            let (x, w) = gauss_legendre(order);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for deg in 0..(2 * order) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!(
                    (got - exact).abs() < 1e-13,
                    "order {order} degree {deg}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn composite_rule_is_a_probability_measure() {
        let d = MarginDistribution::new(0.05, 0.0).unwrap();
        let g = QuadratureGrid::new(&d, 20, 8).unwrap();
        assert_eq!(g.len(), 320);
        assert!((g.integrate(|_| 1.0) - 1.0).abs() < 1e-12);
        assert!((g.integrate(|x| x) - 0.5).abs() < 1e-12);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.nodes().iter().all(|&z| d.in_support(z)));
    }

    #[test]
    fn second_moment_matches_hand_antiderivative() {
        // 2 (∫_0^{1/4} x² dx + ∫_{3/4}^1 x² dx) = 2 (1/192 + 37/192) = 76/192
        let d = MarginDistribution::new(0.5, 0.0).unwrap();
        let g = QuadratureGrid::new(&d, 3, 4).unwrap();
        assert!((g.integrate(|x| x * x) - 76.0 / 192.0).abs() < 1e-12);
    }

    #[test]
    fn per_panel_polynomial_exactness() {
        let d = MarginDistribution::new(0.3, 0.0).unwrap();
        let (order, panels) = (5, 3);
        let g = QuadratureGrid::new(&d, panels, order).unwrap();
        for deg in 0..(2 * order) as i32 {
            let anti = |x: f64| x.powi(deg + 1) / (deg as f64 + 1.0);
            let exact: f64 = d
                .support()
                .iter()
                .map(|(a, b)| (anti(*b) - anti(*a)) * d.density_level())
                .sum();
            assert!((g.integrate(|x| x.powi(deg)) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_degenerate_rules() {
        let d = MarginDistribution::new(0.05, 0.0).unwrap();
        assert!(QuadratureGrid::new(&d, 0, 8).is_err());
        assert!(QuadratureGrid::new(&d, 4, 1).is_err());
        assert!(QuadratureGrid::from_parts(vec![0.2, 0.1], vec![0.5, 0.5]).is_err());
    }
}
