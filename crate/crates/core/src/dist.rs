//! The one-dimensional two-interval margin distribution with independent
//! label noise.
//!
//! `X` is uniform on `S₊ ∪ S₋` with `S₊ = [0, (1−ε)/2]` and
//! `S₋ = [(1+ε)/2, 1]`; the clean label is `+1` on `S₊` and `−1` on `S₋`,
//! and is flipped independently with probability `p`. The regression
//! function is therefore `±(1 − 2p)` on the support, so the margin condition
//! holds with `δ = 1 − 2p`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginDistribution {
    epsilon: f64,
    flip_p: f64,
}

impl MarginDistribution {
    pub fn new(epsilon: f64, flip_p: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return invalid(format!("margin width epsilon must lie in (0, 1), got {epsilon}"));
        }
        if !(0.0..0.5).contains(&flip_p) {
            return invalid(format!("flip probability must lie in [0, 0.5), got {flip_p}"));
        }
        Ok(Self { epsilon, flip_p })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn flip_p(&self) -> f64 {
        self.flip_p
    }

    /// `δ = 1 − 2p`, the uniform lower bound on `|E[y|x]|`.
    pub fn delta(&self) -> f64 {
        1.0 - 2.0 * self.flip_p
    }

    /// `S₊ = [0, (1−ε)/2]`.
    pub fn positive_set(&self) -> (f64, f64) {
        (0.0, (1.0 - self.epsilon) / 2.0)
    }

    /// `S₋ = [(1+ε)/2, 1]`.
    pub fn negative_set(&self) -> (f64, f64) {
        ((1.0 + self.epsilon) / 2.0, 1.0)
    }

    pub fn support(&self) -> [(f64, f64); 2] {
        [self.positive_set(), self.negative_set()]
    }

    /// The constant density value on the support.
    pub fn density_level(&self) -> f64 {
        1.0 / (1.0 - self.epsilon)
    }

    pub fn in_support(&self, x: f64) -> bool {
        let (_, a) = self.positive_set();
        let (b, _) = self.negative_set();
        (0.0..=a).contains(&x) || (b..=1.0).contains(&x)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return invalid(format!("density is defined on [0, 1], got x = {x}"));
        }
        Ok(if self.in_support(x) { self.density_level() } else { 0.0 })
    }

    /// Sign of the Bayes classifier: `+1` on `S₊`, `−1` on `S₋`, `0` in the gap.
    pub fn bayes_sign(&self, x: f64) -> f64 {
        let (_, a) = self.positive_set();
        let (b, _) = self.negative_set();
        if x <= a {
            1.0
        } else if x >= b {
            -1.0
        } else {
            0.0
        }
    }

    /// `E[y | x]`: `±(1 − 2p)` on the support and `0` in the gap.
    pub fn bayes_regression(&self, x: f64) -> f64 {
        self.delta() * self.bayes_sign(x)
    }

    /// `R* = p`: the Bayes classifier errs exactly on flipped labels.
    pub fn bayes_risk(&self) -> f64 {
        self.flip_p
    }

    /// Draws `n` i.i.d. labelled points. Each draw consumes exactly three
    /// uniforms (interval, position, flip) so the stream is reproducible.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<LabeledSample> {
        let half = (1.0 - self.epsilon) / 2.0;
        let (b, _) = self.negative_set();
        (0..n)
            .map(|_| {
                let positive = rng.random::<f64>() < 0.5;
                let u: f64 = rng.random();
                let flip = rng.random::<f64>() < self.flip_p;
                let (x, clean) = if positive {
                    (u * half, 1.0)
                } else {
                    (b + u * half, -1.0)
                };
                LabeledSample {
                    x: x.min(1.0),
                    y: if flip { -clean } else { clean },
                }
            })
            .collect()
    }
}
