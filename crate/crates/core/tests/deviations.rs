use margin_sgd::experiment::{aggregate, ExperimentConfig, MetricRow, ReplicationResult};
use margin_sgd::popridge::{quad_grid, solve_glambda};
use margin_sgd::{fit_krr, lemma2_gap, u_n, v_hs, KernelSpec, MarginDistribution};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setting() -> (MarginDistribution, KernelSpec) {
    (
        MarginDistribution::new(0.05, 0.0).unwrap(),
        KernelSpec::exponential(1.0).unwrap(),
    )
}

#[test]
fn deviations_respect_their_high_probability_bounds() {
    let (d, k) = setting();
    let grid = quad_grid(&d, 20, 8).unwrap();
    let n = 10_000;
    let r = k.bound();
    let u_bound = (8.0 * r * r * 5.0 / n as f64).sqrt();
    let v_bound = (8.0 * r.powi(4) * 5.0 / n as f64).sqrt();
    let reps = 200;
    let (mut u_ok, mut v_ok) = (0, 0);
    for rep in 0..reps {
        let s = d.sample(&mut ChaCha8Rng::seed_from_u64(rep), n);
        u_ok += usize::from(u_n(&s, &d, &k, &grid).unwrap() <= u_bound);
        v_ok += usize::from(v_hs(&s, &k, &grid).unwrap() <= v_bound);
    }
    let need = 1.0 - 2.0 * (-5f64).exp();
    assert!(u_ok as f64 / reps as f64 >= need, "u_n within bound in {u_ok}/{reps}");
    assert!(v_ok as f64 / reps as f64 >= need, "v_hs within bound in {v_ok}/{reps}");
}

#[test]
fn deviations_shrink_with_n() {
    let (d, k) = setting();
    let grid = quad_grid(&d, 20, 8).unwrap();
    let mean = |n: usize| {
        let (mut u, mut v) = (0.0, 0.0);
        for rep in 0..50 {
            let s = d.sample(&mut ChaCha8Rng::seed_from_u64(1000 + rep), n);
            u += u_n(&s, &d, &k, &grid).unwrap() / 50.0;
            v += v_hs(&s, &k, &grid).unwrap() / 50.0;
        }
        (u, v)
    };
    let (u1, v1) = mean(100);
    let (u2, v2) = mean(1600);
    // Square-root rate: a 16-fold sample gives roughly a quarter.
    assert!((u2 / u1 - 0.25).abs() < 0.08, "{}", u2 / u1);
    assert!((v2 / v1 - 0.25).abs() < 0.08, "{}", v2 / v1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ridge_gap_bound_holds(seed in any::<u64>(), n in 5usize..300, lambda in 0.005f64..0.5, p in 0.0f64..0.3) {
        let d = MarginDistribution::new(0.05, p).unwrap();
        let k = KernelSpec::exponential(1.0).unwrap();
        let grid = quad_grid(&d, 20, 8).unwrap();
        let g = solve_glambda(&d, &k, lambda, &grid).unwrap();
        let s = d.sample(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let fit = fit_krr(&s, &k, lambda).unwrap();
        let gap = lemma2_gap(&fit, &g, u_n(&s, &d, &k, &grid).unwrap(), v_hs(&s, &k, &grid).unwrap(), lambda, k.bound())
            .unwrap();
        prop_assert!(gap.holds(), "{:?}", gap);
    }

    #[test]
    fn aggregation_ignores_arrival_order(
        values in prop::collection::vec((0.0f64..1.0, 0.0f64..10.0), 1..60),
        shuffle_seed in any::<u64>(),
    ) {
        let results: Vec<ReplicationResult> = values
            .iter()
            .enumerate()
            .map(|(i, &(e, l))| ReplicationResult {
                index: i,
                seed: i as u64,
                rows: vec![MetricRow { n: 10, excess_error: e, l2_loss: l, train_error: e / 2.0, train_loss: l, h_dist: l.sqrt() }],
            })
            .collect();
        let mut shuffled = results.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = aggregate(&results).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert!((a[0].mean_excess_error - b[0].mean_excess_error).abs() <= 1e-13);
        prop_assert!((a[0].mean_l2_loss - b[0].mean_l2_loss).abs() <= 1e-13);
        prop_assert_eq!(a[0].replications, values.len());
    }

    #[test]
    fn config_round_trips(
        epsilon in 0.01f64..0.9,
        lambda in 1e-4f64..1.0,
        gamma_frac in 0.05f64..0.95,
        alpha in prop_oneof![Just(0.0), 0.1f64..1.0],
        n_max in 2usize..500,
        reps in 1usize..2000,
        seed in any::<u64>(),
    ) {
        let cfg = ExperimentConfig {
            epsilon,
            lambda,
            gamma: gamma_frac / (1.0 + 2.0 * lambda),
            alpha,
            n_max,
            checkpoint_every: 1 + n_max / 7,
            replications: reps,
            base_seed: seed,
            ..Default::default()
        };
        prop_assume!(cfg.validate().is_ok());
        let kv = margin_sgd::experiment::config::parse_kv(&cfg.to_kv()).unwrap();
        prop_assert_eq!(&ExperimentConfig::from_layers(Some(kv), Default::default()).unwrap(), &cfg);
        let json = serde_json::to_value(&cfg).unwrap();
        let back = ExperimentConfig::from_layers(json.as_object().cloned(), Default::default()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
