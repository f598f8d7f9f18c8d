//! Kernel evaluation, Gram matrices and finite kernel expansions in the RKHS.
//!
//! Every element of the hypothesis space that the rest of the crate handles
//! (population ridge solution, kernel ridge fits, SGD iterates and their
//! averages) is an [`HFunction`]: a finite sum `Σ aᵢ K(xᵢ, ·)` plus an optional
//! scaled reference to another expansion. Inner products reduce to Gram
//! quadratics through the reproducing property `⟨f, K_x⟩ = f(x)`.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::pairwise_sum;

/// Kernel family. Only the exponential (Abel / Laplace) kernel on the line is
/// supported: `K(x, y) = exp(-|x - y| / scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Exponential { scale: f64 },
}

/// A bounded positive-definite kernel on `[0, 1]` with `K(x, x) ≤ R²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    kind: KernelKind,
}

impl KernelSpec {
    pub fn exponential(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return invalid(format!("kernel scale must be positive and finite, got {scale}"));
        }
        Ok(Self {
            kind: KernelKind::Exponential { scale },
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        match self.kind {
            KernelKind::Exponential { scale } => scale,
        }
    }

    /// The constant `R` with `K(x, x) ≤ R²`.
    pub fn bound(&self) -> f64 {
        match self.kind {
            KernelKind::Exponential { .. } => 1.0,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            KernelKind::Exponential { scale } => (-(x - y).abs() / scale).exp(),
        }
    }

    /// The pointwise square `K(x, y)²`, itself a kernel of the same family.
    pub fn squared(&self) -> KernelSpec {
        match self.kind {
            KernelKind::Exponential { scale } => KernelSpec {
                kind: KernelKind::Exponential { scale: scale / 2.0 },
            },
        }
    }

    /// `G[i][j] = K(xs[i], ys[j])`.
    pub fn gram(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        if xs.is_empty() || ys.is_empty() {
            return invalid("gram matrix needs non-empty point lists");
        }
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.eval(xs[i], ys[j])))
    }

    /// Evaluates `Σ coefs[j] K(centers[j], p)` at every `p` in `points`.
    ///
    /// Both `centers` and `points` must be sorted ascending. Two linear sweeps
    /// carry the left and right partial sums, so the cost is
    /// `O(centers + points)` instead of their product.
    pub(crate) fn sweep_eval(&self, centers: &[f64], coefs: &[f64], points: &[f64]) -> Vec<f64> {
        let scale = self.scale();
        let mut out = vec![0.0; points.len()];

        // Left sums: centers c <= p, weight exp(-(p - c)/scale).
        let mut acc = 0.0;
        let mut last = f64::NEG_INFINITY;
        let mut j = 0;
        for (slot, &p) in out.iter_mut().zip(points) {
            if acc != 0.0 {
                acc *= (-(p - last) / scale).exp();
            }
            while j < centers.len() && centers[j] <= p {
                acc += coefs[j] * (-(p - centers[j]) / scale).exp();
                j += 1;
            }
            last = p;
            *slot = acc;
        }

        // Right sums: centers c > p, weight exp(-(c - p)/scale).
        let mut acc = 0.0;
        let mut last = f64::INFINITY;
        let mut j = centers.len();
        for (slot, &p) in out.iter_mut().zip(points).rev() {
            if acc != 0.0 {
                acc *= (-(last - p) / scale).exp();
            }
            while j > 0 && centers[j - 1] > p {
                acc += coefs[j - 1] * (-(centers[j - 1] - p) / scale).exp();
                j -= 1;
            }
            last = p;
            *slot += acc;
        }
        out
    }
}

/// A finite kernel expansion `offset_scale · offset(x) + Σᵢ coefsᵢ K(centersᵢ, x)`.
///
/// The offset is held by reference so that recursions which only rescale a
/// fixed starting function cost one scalar update per step.
#[derive(Clone, Debug)]
pub struct HFunction {
    kernel: KernelSpec,
    centers: Vec<f64>,
    coefs: Vec<f64>,
    offset: Option<Arc<HFunction>>,
    offset_scale: f64,
}

impl HFunction {
    pub fn new(kernel: KernelSpec, centers: Vec<f64>, coefs: Vec<f64>) -> Result<Self> {
        if centers.len() != coefs.len() {
            return invalid(format!(
                "expansion has {} centers but {} coefficients",
                centers.len(),
                coefs.len()
            ));
        }
        if let Some(bad) = centers.iter().chain(&coefs).find(|v| !v.is_finite()) {
            return invalid(format!("expansion contains a non-finite value ({bad})"));
        }
        Ok(Self {
            kernel,
            centers,
            coefs,
            offset: None,
            offset_scale: 0.0,
        })
    }

    pub fn zero(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            centers: Vec::new(),
            coefs: Vec::new(),
            offset: None,
            offset_scale: 0.0,
        }
    }

    /// The representer `K_x = K(x, ·)`.
    pub fn atom(kernel: KernelSpec, x: f64) -> Self {
        Self {
            kernel,
            centers: vec![x],
            coefs: vec![1.0],
            offset: None,
            offset_scale: 0.0,
        }
    }

    /// Attaches `scale · offset` to this expansion.
    pub fn with_offset(mut self, offset: Arc<HFunction>, scale: f64) -> Result<Self> {
        if offset.kernel != self.kernel {
            return invalid("offset function uses a different kernel");
        }
        self.offset = Some(offset);
        self.offset_scale = scale;
        Ok(self)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    pub fn offset(&self) -> Option<&Arc<HFunction>> {
        self.offset.as_ref()
    }

    pub fn offset_scale(&self) -> f64 {
        self.offset_scale
    }

    /// Pointwise evaluation by direct summation.
    pub fn eval(&self, x: f64) -> f64 {
        let own: f64 = self
            .centers
            .iter()
            .zip(&self.coefs)
            .map(|(&c, &a)| a * self.kernel.eval(c, x))
            .sum();
        match &self.offset {
            Some(f) if self.offset_scale != 0.0 => own + self.offset_scale * f.eval(x),
            _ => own,
        }
    }

    /// Evaluates at many points (any order) through the sorted sweep.
    pub fn eval_many(&self, points: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();
        let vals = self.eval_sorted(&sorted);
        let mut out = vec![0.0; points.len()];
        for (&i, v) in order.iter().zip(vals) {
            out[i] = v;
        }
        out
    }

    /// Evaluates at points already sorted ascending.
    pub fn eval_sorted(&self, points: &[f64]) -> Vec<f64> {
        debug_assert!(points.windows(2).all(|w| w[0] <= w[1]));
        let flat = self.flatten();
        self.kernel.sweep_eval(&flat.centers, &flat.coefs, points)
    }

    /// Inlines the offset chain, sorts centers, merges repeated centers and
    /// drops exact zeros. The result has no offset.
    pub fn flatten(&self) -> HFunction {
        let mut terms = Vec::with_capacity(self.total_terms());
        self.collect_terms(1.0, &mut terms);
        Self::from_terms(self.kernel, terms)
    }

    fn total_terms(&self) -> usize {
        self.centers.len() + self.offset.as_ref().map_or(0, |f| f.total_terms())
    }

    fn collect_terms(&self, mult: f64, terms: &mut Vec<(f64, f64)>) {
        terms.extend(self.centers.iter().zip(&self.coefs).map(|(&c, &a)| (c, mult * a)));
        if let Some(f) = &self.offset {
            if self.offset_scale != 0.0 {
                f.collect_terms(mult * self.offset_scale, terms);
            }
        }
    }

    fn from_terms(kernel: KernelSpec, mut terms: Vec<(f64, f64)>) -> HFunction {
        terms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut centers: Vec<f64> = Vec::with_capacity(terms.len());
        let mut coefs: Vec<f64> = Vec::with_capacity(terms.len());
        for (c, a) in terms {
            match centers.last() {
                Some(&last) if last == c => *coefs.last_mut().unwrap() += a,
                _ => {
                    centers.push(c);
                    coefs.push(a);
                }
            }
        }
        let (centers, coefs) = centers.into_iter().zip(coefs).filter(|&(_, a)| a != 0.0).unzip();
        HFunction {
            kernel,
            centers,
            coefs,
            offset: None,
            offset_scale: 0.0,
        }
    }

    /// `a · self + b · other`, flattened.
    pub fn combine(&self, a: f64, other: &HFunction, b: f64) -> Result<HFunction> {
        if self.kernel != other.kernel {
            return invalid("cannot combine expansions over different kernels");
        }
        let mut terms = Vec::with_capacity(self.total_terms() + other.total_terms());
        self.collect_terms(a, &mut terms);
        other.collect_terms(b, &mut terms);
        Ok(Self::from_terms(self.kernel, terms))
    }

    pub fn scaled(&self, a: f64) -> HFunction {
        let mut terms = Vec::with_capacity(self.total_terms());
        self.collect_terms(a, &mut terms);
        Self::from_terms(self.kernel, terms)
    }
}

/// Anything that can be evaluated on a sorted batch of points. Lets metrics
/// compare kernel expansions against plain reference functions such as the
/// Bayes regression function.
pub trait Predictor {
    fn predict_sorted(&self, xs: &[f64]) -> Vec<f64>;
}

impl Predictor for HFunction {
    fn predict_sorted(&self, xs: &[f64]) -> Vec<f64> {
        self.eval_sorted(xs)
    }
}

/// Adapts a pointwise closure to [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F: Fn(f64) -> f64> Predictor for FnPredictor<F> {
    fn predict_sorted(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| (self.0)(x)).collect()
    }
}

/// `⟨f, g⟩_H = Σᵢⱼ aᵢ bⱼ K(xᵢ, zⱼ)` over the flattened expansions.
pub fn h_inner(f: &HFunction, g: &HFunction) -> Result<f64> {
    if f.kernel != g.kernel {
        return invalid("inner product between expansions over different kernels");
    }
    let g = g.flatten();
    let f_at_g = f.eval_sorted(&g.centers);
    let terms: Vec<f64> = g.coefs.iter().zip(&f_at_g).map(|(b, v)| b * v).collect();
    Ok(pairwise_sum(&terms))
}

pub fn h_norm(f: &HFunction) -> f64 {
    h_inner(f, f).expect("same kernel").max(0.0).sqrt()
}

/// `‖f − g‖_H`, with the squared norm clamped at zero before the square root.
pub fn h_dist(f: &HFunction, g: &HFunction) -> Result<f64> {
    let diff = f.combine(1.0, g, -1.0)?;
    Ok(h_inner(&diff, &diff)?.max(0.0).sqrt())
}
