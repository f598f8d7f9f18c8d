//! Population quantities: quadrature over `ρ_X`, the regularized population
//! solution `g_λ`, its optimality residual and the margin check.
//!
//! `g_λ` solves `∫ K(x, z) g_λ(x) dρ_X(x) + λ g_λ(z) = ∫ K(x, z) g*(x) dρ_X(x)`.
//! The Nyström discretization on a quadrature grid gives nodal values `v`,
//! and the off-grid extension `g_λ(z) = (1/λ) Σⱼ wⱼ K(zⱼ, z)(g*(zⱼ) − vⱼ)` is
//! itself a finite kernel expansion, so the result lives in `H` exactly.

mod quadrature;

pub use quadrature::{gauss_legendre, QuadratureGrid};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::MarginDistribution;
use crate::error::{invalid, Error, Result};
use crate::kernel::{HFunction, KernelSpec, Predictor};
use crate::numeric::linspace;

pub const DEFAULT_PANELS: usize = 20;
pub const DEFAULT_ORDER: usize = 8;
/// Probe points per support interval for margin and sup-norm checks.
pub const DEFAULT_PROBE: usize = 2001;

pub fn quad_grid(d: &MarginDistribution, panels: usize, order: usize) -> Result<QuadratureGrid> {
    QuadratureGrid::new(d, panels, order)
}

fn bayes_values(d: &MarginDistribution, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| d.bayes_regression(x)).collect()
}

/// Nyström solution of the population ridge equation.
pub fn solve_glambda(d: &MarginDistribution, k: &KernelSpec, lambda: f64, grid: &QuadratureGrid) -> Result<HFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let z = grid.nodes();
    let w = grid.weights();
    let m = z.len();
    let gstar = bayes_values(d, z);
    let gram = k.gram(z, z)?;
    // Row i: Σⱼ wⱼ K(zⱼ, zᵢ) vⱼ + λ vᵢ.
    let mut a = DMatrix::from_fn(m, m, |i, j| w[j] * gram[(i, j)]);
    let rhs = &a * DVector::from_column_slice(&gstar);
    for i in 0..m {
        a[(i, i)] += lambda;
    }
    let v = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Nyström system".into()))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite Nyström solution".into()));
    }
    let coefs = (0..m).map(|j| w[j] * (gstar[j] - v[j]) / lambda).collect();
    HFunction::new(*k, z.to_vec(), coefs)
}

/// `sup_z |Σⱼ wⱼ K(zⱼ, z) g(zⱼ) + λ g(z) − Σⱼ wⱼ K(zⱼ, z) g*(zⱼ)|` over the
/// test points, with the integrals taken on `grid`. Pass a grid finer than
/// the one `g` was solved on.
pub fn optimality_residual(
    g: &HFunction,
    d: &MarginDistribution,
    k: &KernelSpec,
    lambda: f64,
    grid: &QuadratureGrid,
    test_points: &[f64],
) -> Result<f64> {
    if g.kernel() != k {
        return invalid("function and residual kernel differ");
    }
    if test_points.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return invalid("test points must lie in [0, 1]");
    }
    let z = grid.nodes();
    let gz = g.eval_sorted(z);
    let h: Vec<f64> = (0..z.len())
        .map(|j| grid.weights()[j] * (gz[j] - d.bayes_regression(z[j])))
        .collect();
    let mut pts = test_points.to_vec();
    pts.sort_by(f64::total_cmp);
    let integral = k.sweep_eval(z, &h, &pts);
    let gp = g.eval_sorted(&pts);
    Ok(integral
        .iter()
        .zip(&gp)
        .map(|(i, g)| (i + lambda * g).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub min_margin: f64,
    pub sign_ok: bool,
}

/// Uniform probe grid with `probe` points on each support interval, sorted.
pub fn probe_points(d: &MarginDistribution, probe: usize) -> Vec<f64> {
    d.support().iter().flat_map(|&(a, b)| linspace(a, b, probe)).collect()
}

/// `min sign(g*(x)) g(x)` over the probe grid.
pub fn margin_delta(g: &dyn Predictor, d: &MarginDistribution, probe: usize) -> Result<MarginReport> {
    if probe < 2 {
        return invalid("margin probe needs at least 2 points per interval");
    }
    let xs = probe_points(d, probe);
    let min_margin = g
        .predict_sorted(&xs)
        .iter()
        .zip(&xs)
        .map(|(gx, &x)| d.bayes_sign(x) * gx)
        .fold(f64::INFINITY, f64::min);
    Ok(MarginReport {
        min_margin,
        sign_ok: min_margin > 0.0,
    })
}

/// `max |g*(x) − g(x)|` over the probe grid.
pub fn sup_gap(g: &dyn Predictor, d: &MarginDistribution, probe: usize) -> Result<f64> {
    if probe < 2 {
        return invalid("sup-norm probe needs at least 2 points per interval");
    }
    let xs = probe_points(d, probe);
    Ok(g.predict_sorted(&xs)
        .iter()
        .zip(&xs)
        .map(|(gx, &x)| (d.bayes_regression(x) - gx).abs())
        .fold(0.0, f64::max))
}
