//! Regularized kernel least-squares SGD in coefficient space.
//!
//! The iterate after `n` steps is `g_n = c_n g₀ + Σᵢ a_i^n K(xᵢ, ·)`. One step
//! of `g_n = g_{n−1} − γ_n[(g_{n−1}(x_n) − y_n) K_{x_n} + λ(g_{n−1} − g₀)]`
//! reads, with `f_n = 1 − γ_nλ`,
//!
//! ```text
//! a_i^n = f_n a_i^{n−1}            (i < n)
//! a_n^n = −γ_n (g_{n−1}(x_n) − y_n)
//! c_n   = f_n c_{n−1} + γ_nλ       (c₀ = 1 when g₀ is given)
//! ```
//!
//! so `c_n = 1` for all `n` when starting from `g₀` itself, and the offset
//! term simply rides along. Running sums of the coefficients give the
//! averaged iterates.
//!
//! Tail average. `tail_averaged_fn` is the mean of the last `⌈n/2⌉`
//! iterates `g_{⌊n/2⌋+1}, …, g_n`. For even `n = 2m` that is `m` terms and
//! equals `2A_n − A_m` exactly, where `A_n = (1/n) Σ_{k=1}^n g_k`. The window
//! is maintained directly: each step adds the new iterate and, when `n` is
//! even, removes `g_{n/2}`, which is replayed from the stored first
//! coefficients `a_i^i` with the same multiplications as the main recursion.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{LabeledSample, MarginDistribution};
use crate::error::{invalid, Error, Result};
use crate::kernel::{HFunction, KernelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { gamma: f64 },
    PowerDecay { gamma: f64, alpha: f64 },
}

impl StepSchedule {
    pub fn gamma(&self) -> f64 {
        match *self {
            StepSchedule::Constant { gamma } | StepSchedule::PowerDecay { gamma, .. } => gamma,
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            StepSchedule::Constant { .. } => 0.0,
            StepSchedule::PowerDecay { alpha, .. } => alpha,
        }
    }

    /// `γ_n` for `n ≥ 1`.
    pub fn step(&self, n: usize) -> f64 {
        match *self {
            StepSchedule::Constant { gamma } => gamma,
            StepSchedule::PowerDecay { gamma, alpha } => gamma / (n as f64).powf(alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        let gamma = self.gamma();
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("step size must be non-negative, got {gamma}")));
        }
        if let StepSchedule::PowerDecay { alpha, .. } = *self {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::Config(format!("step exponent must lie in [0, 1], got {alpha}")));
            }
        }
        Ok(())
    }
}

/// `γ₀ = (R² + 2λ)⁻¹`, the largest constant step allowed with averaging.
pub fn gamma_max(r: f64, lambda: f64) -> f64 {
    1.0 / (r * r + 2.0 * lambda)
}

/// Replays iterate `k` from the birth coefficients, one step at a time.
#[derive(Clone, Debug, Default)]
struct Shadow {
    k: usize,
    a: Vec<f64>,
    c: f64,
    sum: Vec<f64>,
    sum_c: f64,
}

#[derive(Clone, Debug)]
pub struct SgdState {
    kernel: KernelSpec,
    lambda: f64,
    schedule: StepSchedule,
    g0: Option<Arc<HFunction>>,
    n: usize,
    centers: Vec<f64>,
    a: Vec<f64>,
    birth: Vec<f64>,
    c: f64,
    // Σ_{k=i}^n a_i^k and Σ_{k=0}^n c_k.
    sum: Vec<f64>,
    sum_c: f64,
    // Same sums over the tail window.
    tail: Vec<f64>,
    tail_c: f64,
    shadow: Shadow,
    homogeneous: bool,
}

/// Builds the initial state `g₀` (zero when `g0` is `None`).
///
/// `averaging` enables the `γ ≤ γ₀` check for constant steps.
pub fn new_state(
    kernel: KernelSpec,
    lambda: f64,
    schedule: StepSchedule,
    g0: Option<Arc<HFunction>>,
    averaging: bool,
) -> Result<SgdState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    schedule.validate()?;
    let gamma = schedule.gamma();
    if gamma * lambda >= 1.0 {
        return Err(Error::Config(format!(
            "step size times lambda must be below 1, got {}",
            gamma * lambda
        )));
    }
    if averaging {
        if let StepSchedule::Constant { gamma } = schedule {
            let g_max = gamma_max(kernel.bound(), lambda);
            if gamma > g_max {
                return Err(Error::Config(format!(
                    "constant step gamma = {gamma} exceeds (R^2 + 2 lambda)^-1 = {g_max} required for averaging"
                )));
            }
        }
    }
    if let Some(g) = &g0 {
        if g.kernel() != &kernel {
            return invalid("starting function uses a different kernel");
        }
    }
    let c = if g0.is_some() { 1.0 } else { 0.0 };
    Ok(SgdState {
        kernel,
        lambda,
        schedule,
        g0,
        n: 0,
        centers: Vec::new(),
        a: Vec::new(),
        birth: Vec::new(),
        c,
        sum: Vec::new(),
        sum_c: c,
        tail: Vec::new(),
        tail_c: 0.0,
        shadow: Shadow {
            c,
            sum_c: 0.0,
            ..Shadow::default()
        },
        homogeneous: false,
    })
}

impl SgdState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Current coefficients `a_i^n`.
    pub fn coefs(&self) -> &[f64] {
        &self.a
    }

    /// First coefficients `a_i^i`, as created at step `i`.
    pub fn birth_coefs(&self) -> &[f64] {
        &self.birth
    }

    /// The multiplier `c_n` of `g₀`.
    pub fn offset_scale(&self) -> f64 {
        self.c
    }

    /// `g_{n−1}(x) = c g₀(x) + Σ aᵢ K(xᵢ, x)` by direct summation.
    fn predict(&self, x: f64) -> f64 {
        let own: f64 = self
            .centers
            .iter()
            .zip(&self.a)
            .map(|(&xi, &ai)| ai * self.kernel.eval(xi, x))
            .sum();
        match &self.g0 {
            Some(g) if self.c != 0.0 => own + self.c * g.eval(x),
            _ => own,
        }
    }

    fn offset_update(&self, c: f64, gamma: f64) -> f64 {
        if self.g0.is_none() {
            0.0
        } else if self.homogeneous {
            (1.0 - gamma * self.lambda) * c
        } else {
            (1.0 - gamma * self.lambda) * c + gamma * self.lambda
        }
    }

    fn advance(&mut self, x: f64, new_coef: f64, gamma: f64) {
        let f = 1.0 - gamma * self.lambda;
        self.n += 1;
        for ai in &mut self.a {
            *ai *= f;
        }
        self.c = self.offset_update(self.c, gamma);
        self.centers.push(x);
        self.a.push(new_coef);
        self.birth.push(new_coef);

        for (s, ai) in self.sum.iter_mut().zip(&self.a) {
            *s += ai;
        }
        self.sum.push(new_coef);
        self.sum_c += self.c;

        if self.n.is_multiple_of(2) {
            self.advance_shadow();
            let sh = &self.shadow;
            for (t, s) in self.tail.iter_mut().zip(&sh.a) {
                *t -= s;
            }
            self.tail_c -= sh.c;
        }
        for (t, ai) in self.tail.iter_mut().zip(&self.a) {
            *t += ai;
        }
        self.tail.push(new_coef);
        self.tail_c += self.c;
    }

    fn advance_shadow(&mut self) {
        let k = self.shadow.k + 1;
        let gamma = self.schedule.step(k);
        let f = 1.0 - gamma * self.lambda;
        let c = self.offset_update(self.shadow.c, gamma);
        let sh = &mut self.shadow;
        sh.k = k;
        for s in &mut sh.a {
            *s *= f;
        }
        sh.a.push(self.birth[k - 1]);
        sh.c = c;
        for (s, ai) in sh.sum.iter_mut().zip(&sh.a) {
            *s += ai;
        }
        sh.sum.push(self.birth[k - 1]);
        sh.sum_c += sh.c;
    }

    /// One SGD step on `(x_n, y_n)`.
    ///
    /// # Panics
    ///
    /// If the state has been advanced with [`SgdState::homogeneous_step`].
    pub fn step(&mut self, sample: LabeledSample) {
        if self.homogeneous {
            panic!("state was advanced with homogeneous steps; do not mix step kinds");
        }
        let gamma = self.schedule.step(self.n + 1);
        let pred = self.predict(sample.x);
        self.advance(sample.x, -gamma * (pred - sample.y), gamma);
    }

    /// One noise-free step `η_n = (I − γ_n(K_{x_n} ⊗ K_{x_n} + λI)) η_{n−1}`
    /// with `η₀ = g₀`.
    pub fn homogeneous_step(&mut self, x: f64) -> Result<()> {
        if self.g0.is_none() {
            return invalid("homogeneous steps need a starting function");
        }
        if self.n > 0 && !self.homogeneous {
            return invalid("state was advanced with SGD steps; do not mix step kinds");
        }
        self.homogeneous = true;
        let gamma = self.schedule.step(self.n + 1);
        let eta = self.predict(x);
        self.advance(x, -gamma * eta, gamma);
        Ok(())
    }

    fn build(&self, coefs: Vec<f64>, offset_scale: f64) -> HFunction {
        let f = HFunction::new(self.kernel, self.centers.clone(), coefs).expect("coefficients stay finite");
        match &self.g0 {
            Some(g) => f
                .with_offset(g.clone(), offset_scale)
                .expect("kernel checked at construction"),
            None => f,
        }
    }

    /// The current iterate `g_n`.
    pub fn iterate_fn(&self) -> HFunction {
        self.build(self.a.clone(), self.c)
    }

    /// `ḡ_n = (1/(n+1)) Σ_{k=0}^n g_k`.
    pub fn averaged_fn(&self) -> HFunction {
        let m = (self.n + 1) as f64;
        self.build(self.sum.iter().map(|s| s / m).collect(), self.sum_c / m)
    }

    /// Number of iterates in the tail window, `⌈n/2⌉`.
    pub fn tail_len(&self) -> usize {
        self.n.div_ceil(2)
    }

    /// Mean of `g_{⌊n/2⌋+1}, …, g_n` from the directly maintained window.
    pub fn tail_averaged_fn(&self) -> Result<HFunction> {
        if self.n < 2 {
            return invalid(format!("tail average needs n >= 2, got {}", self.n));
        }
        let m = self.tail_len() as f64;
        Ok(self.build(self.tail.iter().map(|t| t / m).collect(), self.tail_c / m))
    }

    /// The tail average for even `n` through `2A_n − A_{n/2}` with
    /// `A_n = (1/n) Σ_{k=1}^n g_k`, from the running sums alone.
    pub fn tail_from_running_means(&self) -> Result<HFunction> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return invalid(format!("running-mean tail identity needs even n >= 2, got {}", self.n));
        }
        let n = self.n as f64;
        let h = self.shadow.k as f64;
        debug_assert_eq!(self.shadow.k * 2, self.n);
        let c0 = if self.g0.is_some() { 1.0 } else { 0.0 };
        let coefs = (0..self.n)
            .map(|i| {
                let half = self.shadow.sum.get(i).copied().unwrap_or(0.0);
                2.0 * self.sum[i] / n - half / h
            })
            .collect();
        let c = 2.0 * (self.sum_c - c0) / n - self.shadow.sum_c / h;
        Ok(self.build(coefs, c))
    }
}

/// The three estimators at one checkpoint.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub n: usize,
    pub iterate: HFunction,
    pub averaged: HFunction,
    pub tail: Option<HFunction>,
}

impl Snapshot {
    fn take(state: &SgdState) -> Self {
        Snapshot {
            n: state.n(),
            iterate: state.iterate_fn(),
            averaged: state.averaged_fn(),
            tail: state.tail_averaged_fn().ok(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub samples: Vec<LabeledSample>,
    pub snapshots: Vec<Snapshot>,
}

/// Streams `n` samples from `d` through the recursion, snapshotting the
/// estimators whenever the step count reaches a checkpoint.
pub fn run<R: Rng + ?Sized>(
    state: &mut SgdState,
    d: &MarginDistribution,
    rng: &mut R,
    n: usize,
    checkpoints: &[usize],
) -> Result<RunRecord> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("checkpoints must be strictly increasing");
    }
    let end = state.n() + n;
    if let Some(&last) = checkpoints.last() {
        if last > end {
            return invalid(format!("checkpoint {last} lies beyond the final step {end}"));
        }
    }
    let samples = d.sample(rng, n);
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let start = state.n();
    let mut next = checkpoints.iter().skip_while(|&&c| c < start).peekable();
    if next.peek() == Some(&&state.n()) {
        snapshots.push(Snapshot::take(state));
        next.next();
    }
    for s in &samples {
        state.step(*s);
        if next.peek() == Some(&&state.n()) {
            snapshots.push(Snapshot::take(state));
            next.next();
        }
    }
    Ok(RunRecord { samples, snapshots })
}
