//! Classification risk, L2 losses and training-set metrics against the
//! synthetic distribution.

use serde::{Deserialize, Serialize};

use crate::dist::{LabeledSample, MarginDistribution};
use crate::error::{invalid, Result};
use crate::kernel::{h_dist, FnPredictor, HFunction, Predictor};
use crate::numeric::{linspace, pairwise_mean, pairwise_sum};
use crate::popridge::QuadratureGrid;

/// Scan points per support interval for sign-change detection.
pub const DEFAULT_RESOLUTION: usize = 512;
const ROOT_TOL: f64 = 1e-12;

/// `sign u = +1` for `u ≥ 0`.
fn sign(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub excess_risk_01: f64,
    pub risk_01: f64,
    pub l2_loss_vs_glambda: f64,
    pub l2_loss_vs_gstar: f64,
    pub h_dist_vs_glambda: f64,
    pub train_error: f64,
    pub train_loss: f64,
}

/// `(1 − 2p) ρ_X{x : sign g(x) ≠ sign g*(x)}`, from sign roots bracketed on a
/// uniform scan and bisected to `1e−12`.
pub fn excess_risk_01(g: &dyn Predictor, d: &MarginDistribution, resolution: usize) -> Result<f64> {
    if resolution < 64 {
        return invalid(format!("risk resolution must be at least 64, got {resolution}"));
    }
    let eval1 = |x: f64| g.predict_sorted(&[x])[0];
    let mut wrong = Vec::new();
    for (a, b) in d.support() {
        let target = d.bayes_sign(0.5 * (a + b));
        let xs = linspace(a, b, resolution);
        let s: Vec<f64> = g.predict_sorted(&xs).into_iter().map(sign).collect();
        for i in 0..xs.len() - 1 {
            let (lo, hi) = (xs[i], xs[i + 1]);
            if s[i] == s[i + 1] {
                if s[i] != target {
                    wrong.push(hi - lo);
                }
                continue;
            }
            let (mut l, mut h) = (lo, hi);
            while h - l > ROOT_TOL {
                let mid = 0.5 * (l + h);
                if sign(eval1(mid)) == s[i] {
                    l = mid;
                } else {
                    h = mid;
                }
            }
            let root = 0.5 * (l + h);
            wrong.push(if s[i] != target { root - lo } else { hi - root });
        }
    }
    Ok(d.delta() * d.density_level() * pairwise_sum(&wrong))
}

/// `Σⱼ wⱼ (g(zⱼ) − ref(zⱼ))²`.
pub fn l2_loss(g: &dyn Predictor, reference: &dyn Predictor, grid: &QuadratureGrid) -> f64 {
    let gv = g.predict_sorted(grid.nodes());
    let rv = reference.predict_sorted(grid.nodes());
    let sq: Vec<f64> = gv.iter().zip(&rv).map(|(a, b)| (a - b) * (a - b)).collect();
    grid.integrate_values(&sq)
}

/// Training error (fraction with `sign g(xᵢ) ≠ yᵢ`) and mean squared loss.
pub fn train_metrics(g: &dyn Predictor, samples: &[LabeledSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return invalid("training metrics need at least one sample");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let xs: Vec<f64> = sorted.iter().map(|s| s.x).collect();
    let pred = g.predict_sorted(&xs);
    let errs: Vec<f64> = pred
        .iter()
        .zip(&sorted)
        .map(|(p, s)| if sign(*p) != s.y { 1.0 } else { 0.0 })
        .collect();
    let losses: Vec<f64> = pred.iter().zip(&sorted).map(|(p, s)| (p - s.y) * (p - s.y)).collect();
    Ok((pairwise_mean(&errs), pairwise_mean(&losses)))
}

/// All metrics for one estimator.
pub fn evaluate(
    g: &HFunction,
    d: &MarginDistribution,
    g_lambda: &HFunction,
    grid: &QuadratureGrid,
    samples: &[LabeledSample],
    resolution: usize,
) -> Result<EvalReport> {
    let excess = excess_risk_01(g, d, resolution)?;
    let gstar = FnPredictor(|x| d.bayes_regression(x));
    let (train_error, train_loss) = train_metrics(g, samples)?;
    Ok(EvalReport {
        excess_risk_01: excess,
        risk_01: d.bayes_risk() + excess,
        l2_loss_vs_glambda: l2_loss(g, g_lambda, grid),
        l2_loss_vs_gstar: l2_loss(g, &gstar, grid),
        h_dist_vs_glambda: h_dist(g, g_lambda)?,
        train_error,
        train_loss,
    })
}
