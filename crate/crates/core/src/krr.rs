//! Empirical kernel ridge regression and the deviation terms `u_n`, `v_n`
//! that bound `‖ĝ_λ − g_λ‖_H ≤ u_n/λ + R v_n/λ²`.
//!
//! Both deviations are RKHS norms of signed measures: `u_n` is the norm in
//! `H` of `Σᵢ ωᵢ yᵢ K_{xᵢ} − Σⱼ wⱼ g*(zⱼ) K_{zⱼ}`, and the Hilbert–Schmidt
//! norm of `Σ̂ − Σ` is the norm of `Σᵢ ωᵢ K²_{xᵢ} − Σⱼ wⱼ K²_{zⱼ}` in the space
//! of the squared kernel, since `⟨K_x ⊗ K_x, K_y ⊗ K_y⟩_HS = K(x, y)²`.
//! Equal atoms cancel exactly before any quadratic form is taken.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dist::{LabeledSample, MarginDistribution};
use crate::error::{invalid, Error, Result};
use crate::kernel::{h_dist, h_norm, HFunction, KernelSpec};
use crate::popridge::QuadratureGrid;

#[derive(Clone, Debug)]
pub struct KrrFit {
    pub model: HFunction,
    pub lambda: f64,
    pub n: usize,
}

/// `α = (G + nλI)⁻¹ y`, `ĝ_λ = Σ αᵢ K(xᵢ, ·)`.
pub fn fit_krr(samples: &[LabeledSample], k: &KernelSpec, lambda: f64) -> Result<KrrFit> {
    if samples.is_empty() {
        return invalid("kernel ridge regression needs at least one sample");
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let n = samples.len();
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let mut g = k.gram(&xs, &xs)?;
    for i in 0..n {
        g[(i, i)] += n as f64 * lambda;
    }
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.y));
    let alpha = g
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge system is not positive definite".into()))?
        .solve(&y);
    Ok(KrrFit {
        model: HFunction::new(*k, xs, alpha.iter().copied().collect())?,
        lambda,
        n,
    })
}

fn check_weighted(xs: &[f64], ws: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.len() != ws.len() {
        return invalid("empirical measure needs non-empty points and matching weights");
    }
    Ok(())
}

/// `‖Σᵢ ωᵢ yᵢ K_{xᵢ} − E[y K_x]‖_H` for a weighted empirical measure.
pub fn u_weighted(
    xs: &[f64],
    ws: &[f64],
    ys: &[f64],
    d: &MarginDistribution,
    k: &KernelSpec,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_weighted(xs, ws)?;
    if ys.len() != xs.len() {
        return invalid("labels and points differ in length");
    }
    let emp = HFunction::new(*k, xs.to_vec(), ws.iter().zip(ys).map(|(w, y)| w * y).collect())?;
    let pop = HFunction::new(
        *k,
        grid.nodes().to_vec(),
        grid.nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&z, w)| w * d.bayes_regression(z))
            .collect(),
    )?;
    h_dist(&emp, &pop)
}

/// `u_n = ‖(1/n) Σᵢ yᵢ K_{xᵢ} − E[y K_x]‖_H`.
pub fn u_n(samples: &[LabeledSample], d: &MarginDistribution, k: &KernelSpec, grid: &QuadratureGrid) -> Result<f64> {
    let n = samples.len();
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    u_weighted(&xs, &vec![1.0 / n as f64; n], &ys, d, k, grid)
}

/// `‖Σᵢ ωᵢ K_{xᵢ} ⊗ K_{xᵢ} − Σ‖_HS`.
pub fn v_hs_weighted(xs: &[f64], ws: &[f64], k: &KernelSpec, grid: &QuadratureGrid) -> Result<f64> {
    check_weighted(xs, ws)?;
    let k2 = k.squared();
    let centers: Vec<f64> = xs.iter().chain(grid.nodes()).copied().collect();
    let coefs: Vec<f64> = ws.iter().copied().chain(grid.weights().iter().map(|w| -w)).collect();
    Ok(h_norm(&HFunction::new(k2, centers, coefs)?))
}

/// Hilbert–Schmidt norm of `Σ̂ − Σ`, an upper bound on the operator norm `v_n`.
pub fn v_hs(samples: &[LabeledSample], k: &KernelSpec, grid: &QuadratureGrid) -> Result<f64> {
    let n = samples.len();
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    v_hs_weighted(&xs, &vec![1.0 / n as f64; n], k, grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Gap {
    pub lhs: f64,
    pub rhs: f64,
}

impl Lemma2Gap {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `lhs = ‖ĝ_λ − g_λ‖_H`, `rhs = u/λ + R v/λ²`.
pub fn lemma2_gap(fit: &KrrFit, g_lambda: &HFunction, u: f64, v: f64, lambda: f64, r: f64) -> Result<Lemma2Gap> {
    Ok(Lemma2Gap {
        lhs: h_dist(&fit.model, g_lambda)?,
        rhs: u / lambda + r * v / (lambda * lambda),
    })
}
