use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, fmt_f, AggregateRecord, MetricRow, ReplicationResult};
use super::config::{Estimator, ExperimentConfig};
use crate::bounds::{
    mc_concentration_check, noise_constants, thm_error_bounds, BoundParams, ConcentrationReport, ErrorBounds,
};
use crate::dist::{LabeledSample, MarginDistribution};
use crate::error::{Error, Result};
use crate::kernel::{h_dist, h_norm, HFunction, KernelSpec};
use crate::krr::{fit_krr, lemma2_gap, u_n, v_hs};
use crate::metrics::{excess_risk_01, l2_loss, train_metrics};
use crate::numeric::linspace;
use crate::popridge::{quad_grid, solve_glambda, QuadratureGrid, DEFAULT_PROBE};
use crate::sgd::{new_state, run};

/// Runs `f` on a pool of `jobs` threads (0 = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Quantities shared by every replication of one configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub dist: MarginDistribution,
    pub kernel: KernelSpec,
    pub grid: QuadratureGrid,
    pub g_lambda: HFunction,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dist = cfg.distribution()?;
        let kernel = cfg.kernel()?;
        let grid = quad_grid(&dist, cfg.panels, cfg.order)?;
        let g_lambda = solve_glambda(&dist, &kernel, cfg.lambda, &grid)?;
        Ok(Self {
            dist,
            kernel,
            grid,
            g_lambda,
        })
    }

    fn metrics(&self, g: &HFunction, samples: &[LabeledSample], resolution: usize) -> Result<MetricRow> {
        let (train_error, train_loss) = train_metrics(g, samples)?;
        Ok(MetricRow {
            n: samples.len(),
            excess_error: excess_risk_01(g, &self.dist, resolution)?,
            l2_loss: l2_loss(g, &self.g_lambda, &self.grid),
            train_error,
            train_loss,
            h_dist: h_dist(g, &self.g_lambda)?,
        })
    }
}

fn replication_rng(cfg: &ExperimentConfig, r: usize) -> (u64, ChaCha8Rng) {
    let seed = cfg.base_seed.wrapping_add(r as u64);
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

fn one_replication(cfg: &ExperimentConfig, setup: &Setup, r: usize) -> Result<ReplicationResult> {
    let (seed, mut rng) = replication_rng(cfg, r);
    let checkpoints = cfg.checkpoint_list();
    let rows = if cfg.estimator == Estimator::Krr {
        let samples = setup.dist.sample(&mut rng, cfg.n_max);
        checkpoints
            .iter()
            .map(|&n| {
                let fit = fit_krr(&samples[..n], &setup.kernel, cfg.lambda)?;
                setup.metrics(&fit.model, &samples[..n], cfg.resolution)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut state = new_state(setup.kernel, cfg.lambda, cfg.schedule(), None, cfg.averaging())?;
        let rec = run(&mut state, &setup.dist, &mut rng, cfg.n_max, &checkpoints)?;
        rec.snapshots
            .iter()
            .map(|s| {
                let g = match cfg.estimator {
                    Estimator::Plain => &s.iterate,
                    Estimator::Averaged => &s.averaged,
                    _ => s
                        .tail
                        .as_ref()
                        .ok_or_else(|| Error::InvalidArgument("tail average needs n >= 2".into()))?,
                };
                setup.metrics(g, &rec.samples[..s.n], cfg.resolution)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ReplicationResult { index: r, seed, rows })
}

/// Per-replication metrics, in replication order.
pub fn run_replications(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<ReplicationResult>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| one_replication(cfg, setup, r))
        .collect()
}

/// The full simulation: replications, then aggregation per checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<AggregateRecord>> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    aggregate(&run_replications(cfg, &setup)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrrRow {
    pub n: usize,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub u: f64,
    pub v: f64,
    pub error_equal_bayes: bool,
    pub excess_error: f64,
    pub h_dist: f64,
}

/// One sample of size `n_max` per replication; ridge fits on its prefixes.
pub fn run_krr(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<KrrRow>> {
    cfg.validate()?;
    let r_bound = setup.kernel.bound();
    let per_rep: Vec<Vec<KrrRow>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let (seed, mut rng) = replication_rng(cfg, r);
            let samples = setup.dist.sample(&mut rng, cfg.n_max);
            cfg.checkpoint_list()
                .iter()
                .map(|&n| {
                    let s = &samples[..n];
                    let fit = fit_krr(s, &setup.kernel, cfg.lambda)?;
                    let u = u_n(s, &setup.dist, &setup.kernel, &setup.grid)?;
                    let v = v_hs(s, &setup.kernel, &setup.grid)?;
                    let gap = lemma2_gap(&fit, &setup.g_lambda, u, v, cfg.lambda, r_bound)?;
                    let excess = excess_risk_01(&fit.model, &setup.dist, cfg.resolution)?;
                    Ok(KrrRow {
                        n,
                        seed,
                        lhs: gap.lhs,
                        rhs: gap.rhs,
                        u,
                        v,
                        error_equal_bayes: excess == 0.0,
                        excess_error: excess,
                        h_dist: h_dist(&fit.model, &setup.g_lambda)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

pub fn write_krr_csv<W: Write>(mut w: W, rows: &[KrrRow]) -> Result<()> {
    writeln!(w, "n,seed,lhs,rhs,u,v,error_equal_bayes")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            r.seed,
            fmt_f(r.lhs),
            fmt_f(r.rhs),
            fmt_f(r.u),
            fmt_f(r.v),
            u8::from(r.error_equal_bayes)
        )?;
    }
    Ok(())
}

/// Bound parameters for `g₀ = 0` and every error bound at each checkpoint.
pub fn bound_curves(cfg: &ExperimentConfig, setup: &Setup) -> Result<(BoundParams, Vec<ErrorBounds>)> {
    let noise = noise_constants(
        &setup.dist,
        &setup.kernel,
        &setup.g_lambda,
        cfg.lambda,
        &setup.grid,
        DEFAULT_PROBE,
    )?;
    let params = BoundParams::new(
        noise,
        setup.kernel.bound(),
        setup.dist.delta(),
        cfg.lambda,
        cfg.gamma,
        cfg.alpha,
        h_norm(&setup.g_lambda),
    )?;
    let curves = cfg
        .checkpoint_list()
        .iter()
        .map(|&n| thm_error_bounds(&params, n))
        .collect();
    Ok((params, curves))
}

pub fn write_bounds_csv<W: Write>(mut w: W, rows: &[ErrorBounds]) -> Result<()> {
    writeln!(
        w,
        "n,thm3,thm3_applicable,thm4,thm4_applicable,thm5_krr,thm5_krr_applicable,full_avg,full_avg_applicable"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            fmt_f(r.thm3.bound),
            u8::from(r.thm3.applicable),
            fmt_f(r.thm4.bound),
            u8::from(r.thm4.applicable),
            fmt_f(r.thm5_krr.bound),
            u8::from(r.thm5_krr.applicable),
            fmt_f(r.full_avg.bound),
            u8::from(r.full_avg.applicable)
        )?;
    }
    Ok(())
}

/// Scalar martingale check with `n = n_max` steps of uniform increments on
/// `[−a, a]` over `t ∈ [0, 4 b_n]`.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<ConcentrationReport> {
    cfg.validate()?;
    let a = cfg.increment_bound;
    let b = a / 3f64.sqrt();
    let b_n = (cfg.n_max as f64).sqrt() * b;
    let t_grid = linspace(0.0, 4.0 * b_n, cfg.t_points);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    mc_concentration_check(a, b, cfg.n_max, &t_grid, cfg.replications, &mut rng)
}

pub fn write_concentration_csv<W: Write>(mut w: W, rep: &ConcentrationReport) -> Result<()> {
    writeln!(w, "t,hits,empirical,wilson_lower,bound,ok")?;
    for r in &rep.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f(r.t),
            r.hits,
            fmt_f(r.empirical),
            fmt_f(r.wilson_lower),
            fmt_f(r.bound),
            u8::from(r.ok)
        )?;
    }
    Ok(())
}

/// `(x, g*(x), g_λ(x))` on a uniform grid of `[0, 1]`.
pub fn glambda_table(setup: &Setup, points: usize) -> Vec<(f64, f64, f64)> {
    let xs = linspace(0.0, 1.0, points);
    let g = setup.g_lambda.eval_sorted(&xs);
    xs.iter()
        .zip(g)
        .map(|(&x, gl)| (x, setup.dist.bayes_regression(x), gl))
        .collect()
}

pub fn write_glambda_csv<W: Write>(mut w: W, rows: &[(f64, f64, f64)]) -> Result<()> {
    writeln!(w, "x,g_star,g_lambda")?;
    for (x, s, g) in rows {
        writeln!(w, "{},{},{}", fmt_f(*x), fmt_f(*s), fmt_f(*g))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::aggregate::write_aggregate_csv;

    fn small(estimator: Estimator) -> ExperimentConfig {
        ExperimentConfig {
            n_max: 40,
            checkpoint_every: 10,
            replications: 6,
            estimator,
            ..Default::default()
        }
    }

    #[test]
    fn single_row_experiment() {
        let cfg = ExperimentConfig {
            n_max: 1,
            checkpoints: Some(vec![1]),
            replications: 1,
            estimator: Estimator::Plain,
            ..Default::default()
        };
        let recs = run_experiment(&cfg).unwrap();
        let mut out = Vec::new();
        write_aggregate_csv(&mut out, &recs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }

    #[test]
    fn every_estimator_runs_deterministically() {
        for e in [Estimator::Plain, Estimator::Averaged, Estimator::Tail, Estimator::Krr] {
            let cfg = small(e);
            let a = run_experiment(&cfg).unwrap();
            let b = with_jobs(2, || run_experiment(&cfg)).unwrap().unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 4);
            assert!(a.iter().all(|r| r.replications == 6 && r.mean_l2_loss >= 0.0));
        }
    }

    #[test]
    fn krr_rows_satisfy_gap_bound() {
        let cfg = ExperimentConfig {
            n_max: 50,
            checkpoints: Some(vec![10, 50]),
            replications: 3,
            ..Default::default()
        };
        let setup = Setup::new(&cfg).unwrap();
        let rows = run_krr(&cfg, &setup).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.lhs <= r.rhs));
        let mut out = Vec::new();
        write_krr_csv(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 7);
    }

    #[test]
    fn glambda_table_shape() {
        let setup = Setup::new(&ExperimentConfig::default()).unwrap();
        let t = glambda_table(&setup, 101);
        assert_eq!(t.len(), 101);
        assert_eq!(t[0].1, 1.0);
        assert!(t[0].2 > 0.0 && t[100].2 < 0.0);
    }
}
