use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dist::MarginDistribution;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::sgd::{gamma_max, StepSchedule};

/// Largest sample size accepted for kernel ridge fits.
pub const KRR_MAX_N: usize = 4000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    #[default]
    Simulate,
    Krr,
    Bounds,
    Concentration,
    Glambda,
    Selftest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plain,
    Averaged,
    #[default]
    Tail,
    Krr,
}

/// All experiment parameters. Defaults:
/// `ε = 0.05`, `p = 0`, `σ = 1`, `λ = 0.01`, constant `γ = 0.25`, tail
/// averaging, 1000 replications up to `n = 200`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub epsilon: f64,
    pub flip_p: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Step exponent: `γ_n = γ / n^α`; `0` is the constant step.
    pub alpha: f64,
    pub n_max: usize,
    pub checkpoint_every: usize,
    /// Explicit checkpoints; overrides `checkpoint_every` when set.
    pub checkpoints: Option<Vec<usize>>,
    pub replications: usize,
    pub base_seed: u64,
    pub panels: usize,
    pub order: usize,
    pub resolution: usize,
    pub estimator: Estimator,
    pub output: Option<String>,
    /// Increment bound `a` of the scalar martingale in `concentration`.
    pub increment_bound: f64,
    /// Number of `t` values in `concentration`.
    pub t_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::Simulate,
            epsilon: 0.05,
            flip_p: 0.0,
            sigma: 1.0,
            lambda: 0.01,
            gamma: 0.25,
            alpha: 0.0,
            n_max: 200,
            checkpoint_every: 10,
            checkpoints: None,
            replications: 1000,
            base_seed: 0,
            panels: 20,
            order: 8,
            resolution: 512,
            estimator: Estimator::Tail,
            output: None,
            increment_bound: 1.0,
            t_points: 20,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn kv_value(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(kv_value).collect());
    }
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        if !v.is_string() {
            return v;
        }
    }
    Value::String(raw.trim_matches('"').to_string())
}

/// Parses flat `key = value` lines; `#` starts a comment, comma-separated
/// values become lists.
pub fn parse_kv(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config_err(format!("line {}: expected key = value", i + 1));
        };
        map.insert(k.trim().to_string(), kv_value(v));
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Reads a config file: JSON when the extension is `.json` or the text
    /// starts with `{`, key=value lines otherwise.
    pub fn load(path: &Path) -> Result<Map<String, Value>> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            match serde_json::from_str::<Value>(&text)? {
                Value::Object(m) => Ok(m),
                _ => config_err("JSON config must be an object"),
            }
        } else {
            parse_kv(&text)
        }
    }

    /// Defaults, then `file`, then `overrides`, then validation.
    pub fn from_layers(file: Option<Map<String, Value>>, overrides: Map<String, Value>) -> Result<Self> {
        let mut base = match serde_json::to_value(Self::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for layer in file.into_iter().chain(std::iter::once(overrides)) {
            for (k, v) in layer {
                // A single checkpoint written as a bare number.
                let v = match (k.as_str(), v) {
                    ("checkpoints", Value::Number(n)) => Value::Array(vec![Value::Number(n)]),
                    (_, v) => v,
                };
                base.insert(k, v);
            }
        }
        let cfg: Self = serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        if let Value::Object(m) = serde_json::to_value(self).expect("config serializes") {
            for (k, v) in m {
                let text = match v {
                    Value::Null => continue,
                    Value::String(s) => s,
                    Value::Array(a) => a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                    other => other.to_string(),
                };
                let _ = writeln!(out, "{k} = {text}");
            }
        }
        out
    }

    pub fn distribution(&self) -> Result<MarginDistribution> {
        MarginDistribution::new(self.epsilon, self.flip_p).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::exponential(self.sigma).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> StepSchedule {
        if self.alpha == 0.0 {
            StepSchedule::Constant { gamma: self.gamma }
        } else {
            StepSchedule::PowerDecay {
                gamma: self.gamma,
                alpha: self.alpha,
            }
        }
    }

    pub fn averaging(&self) -> bool {
        matches!(self.estimator, Estimator::Averaged | Estimator::Tail)
    }

    /// Resolved checkpoint list, strictly increasing, ending at `n_max`.
    pub fn checkpoint_list(&self) -> Vec<usize> {
        match &self.checkpoints {
            Some(c) => c.clone(),
            None => {
                let step = self.checkpoint_every.max(1);
                let mut c: Vec<usize> = (1..=self.n_max / step).map(|i| i * step).collect();
                if c.last() != Some(&self.n_max) {
                    c.push(self.n_max);
                }
                c
            }
        }
    }

    /// Re-checks every module precondition.
    pub fn validate(&self) -> Result<()> {
        self.distribution()?;
        let k = self.kernel()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return config_err(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return config_err(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return config_err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.gamma * self.lambda >= 1.0 {
            return config_err(format!(
                "gamma * lambda must be below 1, got {}",
                self.gamma * self.lambda
            ));
        }
        if self.averaging() && self.alpha == 0.0 && self.gamma > gamma_max(k.bound(), self.lambda) {
            return config_err(format!(
                "constant step gamma = {} exceeds (R^2 + 2 lambda)^-1 = {} required for averaging",
                self.gamma,
                gamma_max(k.bound(), self.lambda)
            ));
        }
        if self.n_max == 0 {
            return config_err("n_max must be at least 1");
        }
        if self.replications == 0 {
            return config_err("replications must be at least 1");
        }
        if self.panels == 0 || self.order < 2 {
            return config_err("quadrature needs panels >= 1 and order >= 2");
        }
        if self.resolution < 64 {
            return config_err("resolution must be at least 64");
        }
        let cps = self.checkpoint_list();
        if cps.is_empty() {
            return config_err("no checkpoints");
        }
        if cps.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("checkpoints must be strictly increasing");
        }
        if cps[0] == 0 || *cps.last().unwrap() > self.n_max {
            return config_err(format!("checkpoints must lie in 1..={}", self.n_max));
        }
        if self.estimator == Estimator::Tail && cps[0] < 2 {
            return config_err("tail averaging needs checkpoints >= 2");
        }
        let krr = self.estimator == Estimator::Krr || self.command == Command::Krr;
        if krr && self.n_max > KRR_MAX_N {
            return config_err(format!("kernel ridge fits are capped at n = {KRR_MAX_N}"));
        }
        if self.command == Command::Concentration {
            if self.replications < 1000 {
                return config_err("concentration check needs at least 1000 replications");
            }
            if self.increment_bound.is_nan() || self.increment_bound <= 0.0 || self.t_points < 2 {
                return config_err("concentration check needs increment_bound > 0 and t_points >= 2");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn overrides(v: Value) -> Map<String, Value> {
        match v {
            Value::Object(m) => m,
            _ => panic!(),
        }
    }

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::from_layers(None, Map::new()).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.checkpoint_list().len(), 20);
        assert_eq!(c.checkpoint_list()[19], 200);
    }

    #[test]
    fn kv_parsing_and_layering() {
        let file =
            parse_kv("# comment\nepsilon = 0.1\ncheckpoints = 2, 4, 8\nestimator = averaged\nbase_seed = 7\n").unwrap();
        let c = ExperimentConfig::from_layers(Some(file), overrides(json!({"base_seed": 9, "n_max": 8}))).unwrap();
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.checkpoints, Some(vec![2, 4, 8]));
        assert_eq!(c.estimator, Estimator::Averaged);
        assert_eq!(c.base_seed, 9);
        assert!(parse_kv("nonsense").is_err());
        let single = parse_kv("checkpoints = 5\nn_max = 5").unwrap();
        assert_eq!(
            ExperimentConfig::from_layers(Some(single), Map::new())
                .unwrap()
                .checkpoints,
            Some(vec![5])
        );
    }

    #[test]
    fn round_trips() {
        let mut c = ExperimentConfig {
            epsilon: 0.123456789012345,
            checkpoints: Some(vec![3, 7, 11]),
            n_max: 11,
            output: Some("out file.csv".into()),
            estimator: Estimator::Plain,
            command: Command::Krr,
            ..Default::default()
        };
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&j).unwrap(), c);
        let kv = ExperimentConfig::from_layers(Some(parse_kv(&c.to_kv()).unwrap()), Map::new()).unwrap();
        assert_eq!(kv, c);
        c.output = None;
        let kv = ExperimentConfig::from_layers(Some(parse_kv(&c.to_kv()).unwrap()), Map::new()).unwrap();
        assert_eq!(kv, c);
    }

    #[test]
    fn rejects_violated_preconditions() {
        let bad = [
            json!({"epsilon": 1.5}),
            json!({"flip_p": 0.5}),
            json!({"lambda": 0.0}),
            json!({"gamma": 200.0}),
            json!({"gamma": 0.99}),
            json!({"alpha": 2.0}),
            json!({"checkpoints": [5, 3]}),
            json!({"checkpoints": [1, 2]}),
            json!({"checkpoints": [300]}),
            json!({"replications": 0}),
            json!({"estimator": "krr", "n_max": 5000}),
            json!({"command": "concentration", "replications": 10}),
            json!({"unknown_key": 1}),
        ];
        for b in bad {
            assert!(
                matches!(
                    ExperimentConfig::from_layers(None, overrides(b.clone())),
                    Err(Error::Config(_))
                ),
                "{b}"
            );
        }
        // A large constant step is fine without averaging.
        assert!(ExperimentConfig::from_layers(None, overrides(json!({"gamma": 0.99, "estimator": "plain"}))).is_ok());
    }
}
