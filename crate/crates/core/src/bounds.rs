//! Theoretical constants and tail bounds: noise constants, step-size
//! products, the martingale concentration inequalities, the exponential
//! classification bounds and a Monte-Carlo validator for the scalar case.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::MarginDistribution;
use crate::error::{invalid, Result};
use crate::kernel::{HFunction, KernelSpec};
use crate::popridge::{sup_gap, QuadratureGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorA {
    Identity,
    Sigma,
}

/// Noise and spectral constants of the problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    /// `‖g* − g_λ‖_∞` on the probe grid.
    pub sup_inf_norm: f64,
    /// `c^{1/2} = R(1 + 2‖g* − g_λ‖_∞)`.
    pub c_half: f64,
    /// `tr C = 2(1 + ‖g* − g_λ‖²_∞) tr Σ`.
    pub tr_c: f64,
    pub tr_sigma: f64,
    /// `tr(Σ(Σ + λI)⁻²)`.
    pub eff_dim2: f64,
    /// `tr(Σ²(Σ + λI)⁻²)`.
    pub eff_dim2_sigma: f64,
    /// Largest eigenvalue of `Σ`.
    pub sigma_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub r: f64,
    pub delta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub sup_inf_norm: f64,
    pub c_half: f64,
    pub tr_c: f64,
    pub tr_sigma: f64,
    pub eff_dim2: f64,
    pub eff_dim2_sigma: f64,
    pub sigma_max: f64,
    /// `‖g₀ − g_λ‖_H`.
    pub h_norm_init: f64,
    pub operator_a: OperatorA,
}

impl BoundParams {
    pub fn new(
        noise: NoiseConstants,
        r: f64,
        delta: f64,
        lambda: f64,
        gamma: f64,
        alpha: f64,
        h_norm_init: f64,
    ) -> Result<Self> {
        if !(r > 0.0 && delta > 0.0 && lambda > 0.0 && gamma > 0.0) {
            return invalid("R, delta, lambda and gamma must be positive");
        }
        if !(0.0..=1.0).contains(&alpha) || h_norm_init < 0.0 {
            return invalid("alpha must lie in [0, 1] and the initial distance must be non-negative");
        }
        Ok(Self {
            r,
            delta,
            lambda,
            gamma,
            alpha,
            sup_inf_norm: noise.sup_inf_norm,
            c_half: noise.c_half,
            tr_c: noise.tr_c,
            tr_sigma: noise.tr_sigma,
            eff_dim2: noise.eff_dim2,
            eff_dim2_sigma: noise.eff_dim2_sigma,
            sigma_max: noise.sigma_max,
            h_norm_init,
            operator_a: OperatorA::Identity,
        })
    }
}

/// Eigenvalues of `Σ` approximated by those of `W^{1/2} G W^{1/2}` on the grid.
pub fn covariance_spectrum(k: &KernelSpec, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let z = grid.nodes();
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let g = k.gram(z, z)?;
    let m = DMatrix::from_fn(z.len(), z.len(), |i, j| sw[i] * g[(i, j)] * sw[j]);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

pub fn noise_constants(
    d: &MarginDistribution,
    k: &KernelSpec,
    g_lambda: &HFunction,
    lambda: f64,
    grid: &QuadratureGrid,
    probe: usize,
) -> Result<NoiseConstants> {
    if lambda.is_nan() || lambda <= 0.0 {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let s = sup_gap(g_lambda, d, probe)?;
    let r = k.bound();
    let tr_sigma = grid.integrate(|x| k.eval(x, x));
    let spec = covariance_spectrum(k, grid)?;
    let eff_dim2 = spec.iter().map(|s| s / ((s + lambda) * (s + lambda))).sum();
    let eff_dim2_sigma = spec.iter().map(|s| s * s / ((s + lambda) * (s + lambda))).sum();
    Ok(NoiseConstants {
        sup_inf_norm: s,
        c_half: r * (1.0 + 2.0 * s),
        tr_c: 2.0 * (1.0 + s * s) * tr_sigma,
        tr_sigma,
        eff_dim2,
        eff_dim2_sigma,
        sigma_max: spec.first().copied().unwrap_or(0.0),
    })
}

/// `E_t = 4 tr(A H⁻² C) + (2 c^{1/2} ‖A^{1/2}‖ / (3λ)) t`.
pub fn e_t(p: &BoundParams, t: f64) -> f64 {
    let scale = 2.0 * (1.0 + p.sup_inf_norm * p.sup_inf_norm);
    let (trace, a_half) = match p.operator_a {
        OperatorA::Identity => (scale * p.eff_dim2, 1.0),
        OperatorA::Sigma => (scale * p.eff_dim2_sigma, p.sigma_max.sqrt()),
    };
    4.0 * trace + 2.0 * p.c_half * a_half / (3.0 * p.lambda) * t
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTriple {
    pub alpha_n: f64,
    pub beta_n: f64,
    pub zeta_n: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub n: usize,
    pub exact: ScheduleTriple,
    pub estimate: ScheduleTriple,
}

fn schedule_estimate(gamma: f64, lambda: f64, alpha: f64, n: usize) -> ScheduleTriple {
    let gl = gamma * lambda;
    let nf = n as f64;
    if alpha == 0.0 {
        ScheduleTriple {
            alpha_n: (1.0 - gl).powi(n as i32),
            beta_n: gamma / lambda,
            zeta_n: gamma,
        }
    } else if alpha == 1.0 {
        ScheduleTriple {
            alpha_n: nf.powf(-gl),
            beta_n: 2.0 * (1.0 - gl) / (1.0 - 2.0 * gl) * 4f64.powf(gl) * gamma * gamma / nf.powf(2.0 * gl),
            zeta_n: gamma / ((1.0 - gl) * nf.powf(gl)),
        }
    } else {
        let one = 1.0 - alpha;
        let a_n = (-gl / one * ((nf + 1.0).powf(one) - 1.0)).exp();
        let l_a = 2.0 * gl / one * 2f64.powf(one) * (1.0 - 0.75f64.powf(one));
        let decay = (-l_a * nf.powf(one)).exp();
        let lead = if alpha > 0.5 {
            2.0 * alpha / (2.0 * alpha - 1.0)
        } else if alpha == 0.5 {
            (3.0 * nf).ln()
        } else {
            nf.powf(1.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha)
        };
        ScheduleTriple {
            alpha_n: a_n,
            beta_n: gamma * gamma * lead * decay + 2f64.powf(alpha) * gamma / (lambda * nf.powf(alpha)),
            zeta_n: (gamma / (1.0 - gl) * a_n).max(gamma / nf.powf(alpha)),
        }
    }
}

/// Exact and estimated `α_n = Π(1 − γᵢλ)`, `β_n = Σ γ_k² Π_{i>k}(1 − γᵢλ)²`,
/// `ζ_n = max_k γ_k Π_{i>k}(1 − γᵢλ)` for every `n = 1..=n_max`.
pub fn schedule_constants_upto(gamma: f64, lambda: f64, alpha: f64, n_max: usize) -> Result<Vec<ScheduleConstants>> {
    if !(gamma > 0.0 && lambda > 0.0 && gamma * lambda < 1.0) {
        return invalid("schedule constants need gamma, lambda > 0 and gamma * lambda < 1");
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("step exponent must lie in [0, 1], got {alpha}"));
    }
    if alpha == 1.0 && gamma * lambda >= 0.5 {
        return invalid("the 1/n schedule estimates need gamma * lambda < 1/2");
    }
    let (mut a, mut b, mut z) = (1.0, 0.0, 0.0f64);
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let g = gamma / (n as f64).powf(alpha);
        let f = 1.0 - g * lambda;
        a *= f;
        b = f * f * b + g * g;
        z = (f * z).max(g);
        out.push(ScheduleConstants {
            n,
            exact: ScheduleTriple {
                alpha_n: a,
                beta_n: b,
                zeta_n: z,
            },
            estimate: schedule_estimate(gamma, lambda, alpha, n),
        });
    }
    Ok(out)
}

pub fn schedule_constants(gamma: f64, lambda: f64, alpha: f64, n: usize) -> Result<ScheduleConstants> {
    if n == 0 {
        return invalid("schedule constants need n >= 1");
    }
    Ok(*schedule_constants_upto(gamma, lambda, alpha, n)?.last().unwrap())
}

fn check_tail_args(t: f64, a: f64, b: f64) -> Result<()> {
    if !(t >= 0.0 && a > 0.0 && b > 0.0) {
        return invalid(format!(
            "tail bounds need t >= 0 and a, b > 0 (got t={t}, a={a}, b={b})"
        ));
    }
    Ok(())
}

/// `2 exp(−(b²/a²) φ(a t / b²))` with `φ(u) = (1 + u) ln(1 + u) − u`.
pub fn pinelis_tail(t: f64, a: f64, b: f64) -> Result<f64> {
    check_tail_args(t, a, b)?;
    let u = a * t / (b * b);
    let phi = (1.0 + u) * u.ln_1p() - u;
    Ok((2.0 * (-(b * b) / (a * a) * phi).exp()).clamp(0.0, 2.0))
}

/// `2 exp(−t² / (2(b² + a t / 3)))`.
pub fn bernstein_tail(t: f64, a: f64, b: f64) -> Result<f64> {
    check_tail_args(t, a, b)?;
    Ok((2.0 * (-t * t / (2.0 * (b * b + a * t / 3.0))).exp()).clamp(0.0, 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub bound: f64,
    pub applicable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub n: usize,
    /// Last iterate with `γ_n = γ/n^α`.
    pub thm3: BoundValue,
    /// Tail average, constant step.
    pub thm4: BoundValue,
    /// Kernel ridge regression.
    pub thm5_krr: BoundValue,
    /// Full average, constant step.
    pub full_avg: BoundValue,
}

fn burn_ratio(p: &BoundParams) -> f64 {
    5.0 * p.r * p.h_norm_init / p.delta
}

/// `C_R = 2^{α+7} γ R² tr Σ (1 + s²)/λ + 8 γ R² δ (1 + 2s)/3`.
pub fn thm3_constant(p: &BoundParams) -> f64 {
    let s = p.sup_inf_norm;
    2f64.powf(p.alpha + 7.0) * p.gamma * p.r.powi(2) * p.tr_sigma * (1.0 + s * s) / p.lambda
        + 8.0 * p.gamma * p.r.powi(2) * p.delta * (1.0 + 2.0 * s) / 3.0
}

/// `K_R⁻¹ = 2⁹ R² (1 + s²) tr(Σ(Σ+λI)⁻²) + 32 δ R² (1 + 2s)/(3λ)`.
pub fn thm4_constant_inv(p: &BoundParams) -> f64 {
    let s = p.sup_inf_norm;
    512.0 * p.r.powi(2) * (1.0 + s * s) * p.eff_dim2 + 32.0 * p.delta * p.r.powi(2) * (1.0 + 2.0 * s) / (3.0 * p.lambda)
}

/// `C₀⁻¹ = 72(1 + λR²)²`.
pub fn thm5_constant_inv(p: &BoundParams) -> f64 {
    72.0 * (1.0 + p.lambda * p.r * p.r).powi(2)
}

/// Full-average `K_R⁻¹`, the larger of the variance and the bias branch.
pub fn full_avg_constant_inv(p: &BoundParams) -> f64 {
    let s = p.sup_inf_norm;
    let r2 = p.r * p.r;
    let var = 128.0 * r2 * (1.0 + s * s) * p.eff_dim2 + 8.0 * r2 * (1.0 + 2.0 * s) / (3.0 * p.lambda);
    let bias = 64.0 * r2 * r2 * p.h_norm_init * p.eff_dim2 + 16.0 * r2 * r2 * p.h_norm_init / (3.0 * p.lambda);
    var.max(bias)
}

/// Smallest `n` meeting the tail-average burn-in `n ≥ (2/γλ) ln(5R‖g₀ − g_λ‖/δ)`.
pub fn thm4_burn_in(p: &BoundParams) -> usize {
    let ratio = burn_ratio(p);
    if ratio <= 1.0 {
        return 0;
    }
    (2.0 / (p.gamma * p.lambda) * ratio.ln()).ceil() as usize
}

pub fn thm_error_bounds(p: &BoundParams, n: usize) -> ErrorBounds {
    let nf = n as f64;
    let d2 = p.delta * p.delta;
    let gl = p.gamma * p.lambda;
    let ratio = burn_ratio(p);

    let forget = if p.alpha == 1.0 {
        -gl * (nf + 1.0).ln()
    } else {
        -gl / (1.0 - p.alpha) * ((nf + 1.0).powf(1.0 - p.alpha) - 1.0)
    };
    let thm3 = BoundValue {
        bound: 2.0 * (-d2 * nf.powf(p.alpha) / thm3_constant(p)).exp(),
        applicable: ratio == 0.0 || forget.exp() <= 1.0 / ratio,
    };
    let thm4 = BoundValue {
        bound: 4.0 * (-d2 * (nf + 1.0) / thm4_constant_inv(p)).exp(),
        applicable: ratio <= 1.0 || nf >= 2.0 / gl * ratio.ln(),
    };
    let thm5_krr = BoundValue {
        bound: 4.0 * (-p.lambda.powi(4) * d2 * nf / (thm5_constant_inv(p) * p.r.powi(8))).exp(),
        applicable: true,
    };
    let full_avg = BoundValue {
        bound: 4.0 * (-d2 * (nf + 1.0) / full_avg_constant_inv(p)).exp(),
        applicable: nf >= ratio / gl,
    };
    ErrorBounds {
        n,
        thm3,
        thm4,
        thm5_krr,
        full_avg,
    }
}

/// Rate exponent `α γ / (2γ + 1 + 1/β)` under the weaker margin condition.
pub fn weak_margin_exponent(alpha_margin: f64, beta_spec: f64, gamma_src: f64) -> Result<f64> {
    if !(alpha_margin > 0.0 && beta_spec > 1.0 && gamma_src > 0.0) {
        return invalid("weak margin rate needs alpha > 0, beta > 1, gamma > 0");
    }
    Ok(alpha_margin * gamma_src / (2.0 * gamma_src + 1.0 + 1.0 / beta_spec))
}

/// `n^{−α γ / (2γ + 1 + 1/β)}`; the leading constant is omitted.
pub fn weak_margin_rate(alpha_margin: f64, beta_spec: f64, gamma_src: f64, n: usize) -> Result<f64> {
    let q = weak_margin_exponent(alpha_margin, beta_spec, gamma_src)?;
    Ok((n as f64).powf(-q))
}

/// Wilson score lower limit at 95%.
pub fn wilson_lower(hits: usize, trials: usize) -> f64 {
    const Z: f64 = 1.96;
    let nf = trials as f64;
    let p = hits as f64 / nf;
    let z2 = Z * Z;
    let centre = p + z2 / (2.0 * nf);
    let spread = Z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - spread) / (1.0 + z2 / nf)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub t: f64,
    pub hits: usize,
    pub empirical: f64,
    pub wilson_lower: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub a: f64,
    pub b_n: f64,
    pub n: usize,
    pub reps: usize,
    pub rows: Vec<ConcentrationRow>,
    pub passed: bool,
}

/// Simulates `Σ_{k≤n} ξ_k` with `ξ_k` i.i.d. uniform on `[−a, a]` and compares
/// `P(|Σ| ≥ t)` against the Bernstein bound with `b_n = √n · b_per_step`.
/// Replication `r` draws from its own stream seeded from `rng`.
pub fn mc_concentration_check<R: Rng + ?Sized>(
    a: f64,
    b_per_step: f64,
    n: usize,
    t_grid: &[f64],
    reps: usize,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    if reps < 1000 {
        return invalid(format!(
            "concentration check needs at least 1000 replications, got {reps}"
        ));
    }
    if !(a > 0.0 && b_per_step > 0.0) || n == 0 {
        return invalid("concentration check needs a, b > 0 and n >= 1");
    }
    let base: u64 = rng.random();
    let sums: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = ChaCha8Rng::seed_from_u64(base.wrapping_add(r));
            (0..n).map(|_| stream.random_range(-a..=a)).sum::<f64>().abs()
        })
        .collect();
    let b_n = (n as f64).sqrt() * b_per_step;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let hits = sums.iter().filter(|&&s| s >= t).count();
            let lower = wilson_lower(hits, reps);
            let bound = bernstein_tail(t, a, b_n)?;
            Ok(ConcentrationRow {
                t,
                hits,
                empirical: hits as f64 / reps as f64,
                wilson_lower: lower,
                bound,
                ok: lower <= bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = rows.iter().all(|r| r.ok);
    Ok(ConcentrationReport {
        a,
        b_n,
        n,
        reps,
        rows,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::h_norm;
    use crate::numeric::linspace;
    use crate::popridge::{quad_grid, solve_glambda, DEFAULT_PROBE};
    use proptest::prelude::*;

    fn k1() -> KernelSpec {
        KernelSpec::exponential(1.0).unwrap()
    }

    fn default_params() -> (BoundParams, HFunction) {
        let d = MarginDistribution::new(0.05, 0.0).unwrap();
        let grid = quad_grid(&d, 20, 8).unwrap();
        let gl = solve_glambda(&d, &k1(), 0.01, &grid).unwrap();
        let nc = noise_constants(&d, &k1(), &gl, 0.01, &grid, DEFAULT_PROBE).unwrap();
        let p = BoundParams::new(nc, 1.0, 1.0, 0.01, 0.25, 0.0, h_norm(&gl)).unwrap();
        (p, gl)
    }

    #[test]
    fn noise_constant_examples() {
        let d = MarginDistribution::new(0.05, 0.0).unwrap();
        let grid = quad_grid(&d, 20, 8).unwrap();
        let (p, _) = default_params();
        assert!((p.tr_sigma - 1.0).abs() < 1e-12);
        assert!(p.eff_dim2 > 0.0 && p.eff_dim2 <= p.tr_sigma / (p.lambda * p.lambda));
        assert!(p.sup_inf_norm > 0.0 && p.sup_inf_norm.is_finite());
        // Spectrum sums to the trace.
        let spec = covariance_spectrum(&k1(), &grid).unwrap();
        assert!((spec.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // g = 0 is at distance exactly 1 from g* on the support.
        let zero_gap = noise_constants(&d, &k1(), &HFunction::zero(k1()), 0.01, &grid, 11).unwrap();
        assert_eq!(zero_gap.sup_inf_norm, 1.0);
        assert_eq!(zero_gap.c_half, 3.0);
        assert!((zero_gap.tr_c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn e_t_matches_formula() {
        let (mut p, _) = default_params();
        let s = p.sup_inf_norm;
        let expect = 4.0 * 2.0 * (1.0 + s * s) * p.eff_dim2 + 2.0 * p.c_half / (3.0 * p.lambda) * 0.3;
        assert!((e_t(&p, 0.3) - expect).abs() < 1e-9 * expect);
        p.operator_a = OperatorA::Sigma;
        assert!(e_t(&p, 0.3) < expect);
    }

    #[test]
    fn constant_step_schedule_is_exact() {
        let (g, l) = (0.25, 0.01);
        for n in [1, 5, 100] {
            let c = schedule_constants(g, l, 0.0, n).unwrap();
            assert!((c.exact.alpha_n - (1.0 - g * l).powi(n as i32)).abs() < 1e-14);
            assert_eq!(c.exact.zeta_n, g);
            assert!(c.exact.beta_n <= g / l);
        }
        for alpha in [0.0, 0.3, 1.0] {
            let c = schedule_constants(g, l, alpha, 1).unwrap();
            assert!((c.exact.alpha_n - (1.0 - g * l)).abs() < 1e-15);
            assert!((c.exact.beta_n - g * g).abs() < 1e-15);
            assert_eq!(c.exact.zeta_n, g);
        }
        let c = schedule_constants(g, l, 0.5, 100).unwrap();
        assert!(c.exact.alpha_n <= (-(g * l / 0.5) * (101f64.sqrt() - 1.0)).exp());
        assert!(schedule_constants(0.25, 10.0, 0.0, 3).is_err());
        assert!(schedule_constants(100.0, 0.006, 1.0, 3).is_err());
    }

    #[test]
    fn zeta_equals_max_of_ends() {
        // ζ_n = max{γ_n, γ α_n / (1 − γλ)} for power schedules.
        let (g, l) = (0.5, 0.05);
        for alpha in [0.25, 0.5, 1.0] {
            for c in schedule_constants_upto(g, l, alpha, 300).unwrap() {
                let first = g / (1.0 - g * l) * c.exact.alpha_n;
                let last = g / (c.n as f64).powf(alpha);
                assert!((c.exact.zeta_n - first.max(last)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn estimates_dominate_exact_values() {
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for c in schedule_constants_upto(0.25, 0.01, alpha, 10_000).unwrap() {
                let (e, s) = (c.exact, c.estimate);
                assert!(e.alpha_n <= s.alpha_n * (1.0 + 1e-12), "alpha {alpha} n {}", c.n);
                assert!(e.beta_n <= s.beta_n * (1.0 + 1e-12), "alpha {alpha} n {}", c.n);
                assert!(e.zeta_n <= s.zeta_n * (1.0 + 1e-12), "alpha {alpha} n {}", c.n);
            }
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(pinelis_tail(0.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(bernstein_tail(0.0, 1.0, 1.0).unwrap(), 2.0);
        assert!((bernstein_tail(1.0, 1.0, 1.0).unwrap() - 2.0 * (-0.375f64).exp()).abs() < 1e-15);
        assert!((bernstein_tail(1.0, 1.0, 1.0).unwrap() - 1.374_6).abs() < 1e-4);
        for t in [0.1, 1.0, 10.0] {
            assert!(pinelis_tail(t, 1.0, 1.0).unwrap() <= bernstein_tail(t, 1.0, 1.0).unwrap());
        }
        // φ(1) = 2 ln 2 − 1 by hand.
        let expect = 2.0 * (-(2.0 * 2f64.ln() - 1.0)).exp();
        assert!((pinelis_tail(1.0, 1.0, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!(pinelis_tail(-1.0, 1.0, 1.0).is_err());
        assert!(bernstein_tail(1.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn bernstein_dominates_pinelis(t in 1e-6f64..100.0, a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let p = pinelis_tail(t, a, b).unwrap();
            let q = bernstein_tail(t, a, b).unwrap();
            prop_assert!(p <= q * (1.0 + 1e-12) + 1e-300);
            prop_assert!((0.0..=2.0).contains(&p));
        }
    }

    #[test]
    fn theorem_bounds_behave() {
        let (p, gl) = default_params();
        let burn = thm4_burn_in(&p);
        let expect = (2.0 / (0.25 * 0.01) * (5.0 * h_norm(&gl)).ln()).ceil() as usize;
        assert_eq!(burn, expect);
        assert!(!thm_error_bounds(&p, burn - 1).thm4.applicable);
        assert!(thm_error_bounds(&p, burn).thm4.applicable);
        let mut prev = thm_error_bounds(&p, 1);
        for n in (10..200_000).step_by(997) {
            let b = thm_error_bounds(&p, n);
            for (x, y) in [
                (b.thm3.bound, prev.thm3.bound),
                (b.thm4.bound, prev.thm4.bound),
                (b.thm5_krr.bound, prev.thm5_krr.bound),
                (b.full_avg.bound, prev.full_avg.bound),
            ] {
                assert!(x > 0.0 && x <= 4.0 && x <= y);
            }
            prev = b;
        }
        assert!(thm_error_bounds(&p, 1).thm5_krr.applicable);
    }

    #[test]
    fn theorem_constants_by_hand() {
        let nc = NoiseConstants {
            sup_inf_norm: 0.5,
            c_half: 2.0,
            tr_c: 2.5,
            tr_sigma: 1.0,
            eff_dim2: 10.0,
            eff_dim2_sigma: 1.0,
            sigma_max: 0.5,
        };
        let p = BoundParams::new(nc, 1.0, 1.0, 0.1, 0.5, 0.5, 2.0).unwrap();
        // 2^{7.5}·0.5·1.25/0.1 + 8·0.5·2/3
        let c_r = 2f64.powf(7.5) * 0.5 * 1.25 / 0.1 + 8.0 / 3.0;
        assert!((thm3_constant(&p) - c_r).abs() < 1e-9);
        assert!((thm4_constant_inv(&p) - (512.0 * 1.25 * 10.0 + 64.0 / 0.3)).abs() < 1e-9);
        assert!((thm5_constant_inv(&p) - 72.0 * 1.21).abs() < 1e-12);
        let var: f64 = 128.0 * 1.25 * 10.0 + 16.0 / 0.3;
        let bias = 64.0 * 2.0 * 10.0 + 32.0 / 0.3;
        assert!((full_avg_constant_inv(&p) - var.max(bias)).abs() < 1e-9);
        // Full-average burn-in: 5·1·2/(0.1·0.5·1) = 200.
        assert!(!thm_error_bounds(&p, 199).full_avg.applicable);
        assert!(thm_error_bounds(&p, 200).full_avg.applicable);
    }

    #[test]
    fn weak_margin_examples() {
        assert!((weak_margin_exponent(1.0, 1e300, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(weak_margin_rate(2.0, 3.0, 0.5, 1).unwrap(), 1.0);
        let big = weak_margin_exponent(1e6, 2.0, 1.0).unwrap();
        assert!((big - 1e6 / 3.5).abs() < 1e-6);
        assert!(weak_margin_rate(0.0, 2.0, 1.0, 5).is_err());
        assert!(weak_margin_rate(1.0, 1.0, 1.0, 5).is_err());
    }

    #[test]
    fn wilson_limits() {
        assert_eq!(wilson_lower(0, 1000), 0.0);
        let l = wilson_lower(500, 1000);
        assert!(l < 0.5 && l > 0.46);
        assert!(wilson_lower(1000, 1000) < 1.0);
    }

    #[test]
    fn concentration_small_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = 1.0 / 3f64.sqrt();
        let rep = mc_concentration_check(1.0, b, 100, &[0.0, 5.0, 10.0, 40.0], 2000, &mut rng).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.rows[0].empirical, 1.0);
        assert_eq!(rep.rows[0].bound, 2.0);
        assert_eq!(rep.rows[3].hits, 0);
        assert!(mc_concentration_check(1.0, b, 100, &linspace(0.0, 1.0, 3), 10, &mut rng).is_err());
    }
}
