use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use margin_sgd::experiment::{
    bound_curves, glambda_table, run_concentration, run_experiment, run_krr, selftest, with_jobs, write_aggregate_csv,
    write_bounds_csv, write_concentration_csv, write_glambda_csv, write_krr_csv, Command, Estimator, ExperimentConfig,
    Setup,
};
use margin_sgd::Error;

#[derive(Parser, Debug)]
#[command(name = "margin-sgd", version, about = "Kernel least-squares SGD under a hard margin")]
struct Cli {
    #[command(subcommand)]
    command: Option<Sub>,
    /// Config file, key=value lines or JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "MARGIN_SGD_JOBS", default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, allow_negative_numbers = true)]
    seed: Option<u64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Largest sample size.
    #[arg(long, global = true, allow_negative_numbers = true)]
    n: Option<usize>,
    /// Replications.
    #[arg(long, global = true, allow_negative_numbers = true)]
    reps: Option<usize>,
    /// plain, averaged, tail or krr.
    #[arg(long, global = true)]
    estimator: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Replicated SGD or ridge runs, aggregated per checkpoint.
    Simulate,
    /// Kernel ridge gap bound per replication and checkpoint.
    Krr,
    /// Error bound curves over n, plus the bound parameters as JSON.
    Bounds,
    /// Monte-Carlo check of the martingale tail bound.
    Concentration,
    /// Population ridge solution on a grid of [0, 1].
    Glambda,
    /// Fast invariant checks.
    Selftest,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Simulate => Command::Simulate,
            Sub::Krr => Command::Krr,
            Sub::Bounds => Command::Bounds,
            Sub::Concentration => Command::Concentration,
            Sub::Glambda => Command::Glambda,
            Sub::Selftest => Command::Selftest,
        }
    }
}

impl Cli {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(c) = self.command {
            m.insert(
                "command".into(),
                serde_json::to_value(c.command()).expect("enum serializes"),
            );
        }
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put("base_seed", self.seed.map(|v| json!(v)));
        put("epsilon", self.epsilon.map(|v| json!(v)));
        put("gamma", self.gamma.map(|v| json!(v)));
        put("lambda", self.lambda.map(|v| json!(v)));
        put("alpha", self.alpha.map(|v| json!(v)));
        put("n_max", self.n.map(|v| json!(v)));
        put("replications", self.reps.map(|v| json!(v)));
        put("estimator", self.estimator.as_ref().map(|v| json!(v)));
        put("output", self.out.as_ref().map(|p| json!(p.to_string_lossy())));
        m
    }
}

fn sink(path: Option<&Path>) -> margin_sgd::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(cfg: &ExperimentConfig) -> margin_sgd::Result<bool> {
    let out = cfg.output.as_deref().map(Path::new);
    match cfg.command {
        Command::Simulate => {
            let recs = run_experiment(cfg)?;
            let mut w = sink(out)?;
            write_aggregate_csv(&mut w, &recs)?;
            w.flush()?;
        }
        Command::Krr => {
            if cfg.estimator != Estimator::Krr && cfg.estimator != Estimator::default() {
                return Err(Error::Config("the krr subcommand only fits kernel ridge".into()));
            }
            let setup = Setup::new(cfg)?;
            let rows = run_krr(cfg, &setup)?;
            let mut w = sink(out)?;
            write_krr_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Bounds => {
            let setup = Setup::new(cfg)?;
            let (params, curves) = bound_curves(cfg, &setup)?;
            let mut w = sink(out)?;
            write_bounds_csv(&mut w, &curves)?;
            w.flush()?;
            let text = serde_json::to_string_pretty(&params)?;
            match out {
                Some(p) => std::fs::write(p.with_extension("json"), text + "\n")?,
                None => eprintln!("{text}"),
            }
        }
        Command::Concentration => {
            let rep = run_concentration(cfg)?;
            let mut w = sink(out)?;
            write_concentration_csv(&mut w, &rep)?;
            w.flush()?;
            eprintln!(
                "a = {}, b_n = {}, n = {}, reps = {}: {}",
                rep.a,
                rep.b_n,
                rep.n,
                rep.reps,
                if rep.passed { "bound holds" } else { "bound exceeded" }
            );
            return Ok(rep.passed);
        }
        Command::Glambda => {
            let setup = Setup::new(cfg)?;
            let mut w = sink(out)?;
            write_glambda_csv(&mut w, &glambda_table(&setup, 1001))?;
            w.flush()?;
        }
        Command::Selftest => {
            let checks = selftest()?;
            let mut w = sink(out)?;
            for c in &checks {
                writeln!(w, "{c}")?;
            }
            w.flush()?;
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let file = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
        let cfg = ExperimentConfig::from_layers(file, cli.overrides())?;
        with_jobs(cli.jobs, || execute(&cfg))?
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("margin-sgd: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 3,
                _ => 2,
            })
        }
    }
}
