use std::path::Path;
use std::process::{Command, Output};

use margin_sgd::experiment::CSV_HEADER;

fn margin_sgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_margin-sgd"))
        .args(args)
        .env_remove("MARGIN_SGD_JOBS")
        .output()
        .unwrap()
}

fn text(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn one_replication_one_checkpoint_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("one.conf");
    std::fs::write(
        &conf,
        "# single step\nn_max = 1\ncheckpoints = 1\nreplications = 1\nestimator = plain\n",
    )
    .unwrap();
    let out = dir.path().join("one.csv");
    let o = margin_sgd(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = text(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn csv_values_keep_full_precision() {
    let o = margin_sgd(&["simulate", "--n", "20", "--reps", "3", "--seed", "5"]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    for line in stdout.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8);
        for f in &fields[1..6] {
            let mantissa = f.split('e').next().unwrap().replace(['-', '.'], "");
            assert!(mantissa.len() >= 15, "{f}");
            assert!(f.parse::<f64>().is_ok());
        }
    }
}

#[test]
fn flags_override_file_and_json_config_works() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.json");
    std::fs::write(&conf, r#"{"n_max": 30, "replications": 2, "estimator": "averaged"}"#).unwrap();
    let o = margin_sgd(&["simulate", "--config", conf.to_str().unwrap(), "--n", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let ns: Vec<&str> = stdout.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["10", "20"]);
}

#[test]
fn seed_changes_output_and_jobs_do_not() {
    let run = |seed: &str, jobs: &str| {
        let o = margin_sgd(&["simulate", "--n", "30", "--reps", "5", "--seed", seed, "--jobs", jobs]);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("1", "1"), run("1", "3"));
    assert_ne!(run("1", "1"), run("2", "1"));
}

#[test]
fn invalid_config_names_the_precondition() {
    for (args, needle) in [
        (vec!["simulate", "--lambda", "-1"], "lambda"),
        (vec!["simulate", "--gamma", "2"], "gamma"),
        (vec!["simulate", "--alpha", "1.5"], "alpha"),
        (vec!["simulate", "--reps", "0"], "replications"),
        (vec!["simulate", "--estimator", "median"], "median"),
        (vec!["concentration", "--reps", "10"], "1000"),
    ] {
        let o = margin_sgd(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let o = margin_sgd(&[
        "simulate",
        "--n",
        "10",
        "--reps",
        "1",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bounds_emits_csv_and_params_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bounds.csv");
    let o = margin_sgd(&["bounds", "--n", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = text(&out);
    assert!(csv.starts_with("n,thm3,"));
    assert_eq!(csv.lines().count(), 6);
    let params: serde_json::Value = serde_json::from_str(&text(&out.with_extension("json"))).unwrap();
    assert_eq!(params["lambda"], 0.01);
    assert_eq!(params["delta"], 1.0);
    assert!(params["h_norm_init"].as_f64().unwrap() > 0.0);
}

#[test]
fn other_subcommands_produce_their_schemas() {
    let o = margin_sgd(&["krr", "--n", "40", "--reps", "2"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("n,seed,lhs,rhs,u,v,error_equal_bayes\n"));
    assert_eq!(s.lines().count(), 1 + 2 * 4);

    let o = margin_sgd(&["glambda"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1002);

    let o = margin_sgd(&["concentration", "--n", "20", "--reps", "2000"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("t,hits,empirical,wilson_lower,bound,ok\n"));
    assert_eq!(s.lines().count(), 21);
}

#[test]
fn selftest_reports_every_check() {
    let o = margin_sgd(&["selftest"]);
    let s = String::from_utf8(o.stdout).unwrap();
    assert_eq!(s.lines().count(), 7);
    assert!(s.lines().all(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")));
    let all_pass = s.lines().all(|l| l.starts_with("[PASS]"));
    assert_eq!(o.status.success(), all_pass);
}
