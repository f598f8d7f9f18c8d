//! Python bindings: the margin distribution, population and empirical ridge
//! solutions, the SGD state, evaluation metrics and the experiment driver.

use std::sync::Arc;

use margin_sgd::experiment::{self, config::parse_kv, Check};
use margin_sgd::{
    excess_risk_01, fit_krr, h_dist, h_norm, new_state, quad_grid, solve_glambda, Error, HFunction, KernelSpec,
    LabeledSample, MarginDistribution, SgdState, StepSchedule,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for margin_sgd::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn sorted_eval(f: &HFunction, xs: Vec<f64>) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sorted: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let vals = f.eval_sorted(&sorted);
    let mut out = vec![0.0; xs.len()];
    for (i, v) in idx.into_iter().zip(vals) {
        out[i] = v;
    }
    out
}

/// Labelled distribution on [0, 1] with a band of width epsilon around 1/2.
#[pyclass(name = "MarginDistribution", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDistribution(MarginDistribution);

#[pymethods]
impl PyDistribution {
    #[new]
    #[pyo3(signature = (epsilon, flip_p = 0.0))]
    fn new(epsilon: f64, flip_p: f64) -> PyResult<Self> {
        MarginDistribution::new(epsilon, flip_p).py().map(Self)
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    #[getter]
    fn flip_p(&self) -> f64 {
        self.0.flip_p()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    fn bayes_regression(&self, x: f64) -> f64 {
        self.0.bayes_regression(x)
    }

    fn bayes_risk(&self) -> f64 {
        self.0.bayes_risk()
    }

    /// `n` labelled points `(x, y)` from a ChaCha8 stream seeded with `seed`.
    fn sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.0.sample(&mut rng, n).into_iter().map(|s| (s.x, s.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "MarginDistribution(epsilon={}, flip_p={})",
            self.0.epsilon(),
            self.0.flip_p()
        )
    }
}

/// Finite kernel expansion in the RKHS of the exponential kernel.
#[pyclass(name = "HFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHFunction(HFunction);

#[pymethods]
impl PyHFunction {
    #[new]
    #[pyo3(signature = (centers, coefs, sigma = 1.0))]
    fn new(centers: Vec<f64>, coefs: Vec<f64>, sigma: f64) -> PyResult<Self> {
        let k = KernelSpec::exponential(sigma).py()?;
        HFunction::new(k, centers, coefs).py().map(Self)
    }

    fn __call__(&self, xs: Vec<f64>) -> Vec<f64> {
        sorted_eval(&self.0, xs)
    }

    #[getter]
    fn centers(&self) -> Vec<f64> {
        self.0.flatten().centers().to_vec()
    }

    #[getter]
    fn coefs(&self) -> Vec<f64> {
        self.0.flatten().coefs().to_vec()
    }

    fn h_norm(&self) -> f64 {
        h_norm(&self.0)
    }

    fn h_dist(&self, other: &PyHFunction) -> PyResult<f64> {
        h_dist(&self.0, &other.0).py()
    }

    /// Excess 0-1 risk of `sign(self)` under `d`.
    #[pyo3(signature = (d, resolution = 512))]
    fn excess_risk(&self, d: &PyDistribution, resolution: usize) -> PyResult<f64> {
        excess_risk_01(&self.0, &d.0, resolution).py()
    }
}

/// Population ridge solution on a composite Gauss-Legendre grid.
#[pyfunction]
#[pyo3(signature = (d, lam, sigma = 1.0, panels = 20, order = 8))]
fn glambda(d: &PyDistribution, lam: f64, sigma: f64, panels: usize, order: usize) -> PyResult<PyHFunction> {
    let k = KernelSpec::exponential(sigma).py()?;
    let grid = quad_grid(&d.0, panels, order).py()?;
    solve_glambda(&d.0, &k, lam, &grid).py().map(PyHFunction)
}

/// Empirical kernel ridge regression on `(x, y)` pairs.
#[pyfunction]
#[pyo3(signature = (samples, lam, sigma = 1.0))]
fn krr(samples: Vec<(f64, f64)>, lam: f64, sigma: f64) -> PyResult<PyHFunction> {
    let k = KernelSpec::exponential(sigma).py()?;
    let s: Vec<LabeledSample> = samples.into_iter().map(|(x, y)| LabeledSample { x, y }).collect();
    fit_krr(&s, &k, lam).py().map(|f| PyHFunction(f.model))
}

/// Online SGD state; `alpha = 0` is the constant step.
#[pyclass(name = "Sgd")]
struct PySgd(SgdState);

#[pymethods]
impl PySgd {
    #[new]
    #[pyo3(signature = (lam, gamma, alpha = 0.0, sigma = 1.0, averaging = true, g0 = None))]
    fn new(lam: f64, gamma: f64, alpha: f64, sigma: f64, averaging: bool, g0: Option<&PyHFunction>) -> PyResult<Self> {
        let k = KernelSpec::exponential(sigma).py()?;
        let schedule = if alpha == 0.0 {
            StepSchedule::Constant { gamma }
        } else {
            StepSchedule::PowerDecay { gamma, alpha }
        };
        let g0 = g0.map(|g| Arc::new(g.0.clone()));
        new_state(k, lam, schedule, g0, averaging).py().map(Self)
    }

    fn step(&mut self, x: f64, y: f64) {
        self.0.step(LabeledSample { x, y });
    }

    fn fit(&mut self, samples: Vec<(f64, f64)>) {
        for (x, y) in samples {
            self.0.step(LabeledSample { x, y });
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn iterate(&self) -> PyHFunction {
        PyHFunction(self.0.iterate_fn())
    }

    fn averaged(&self) -> PyHFunction {
        PyHFunction(self.0.averaged_fn())
    }

    fn tail_averaged(&self) -> PyResult<PyHFunction> {
        self.0.tail_averaged_fn().py().map(PyHFunction)
    }
}

fn config(text: &str) -> PyResult<experiment::ExperimentConfig> {
    let file = parse_kv(text).py()?;
    experiment::ExperimentConfig::from_layers(Some(file), Default::default()).py()
}

/// Replicated experiment from `key = value` config text; one dict per checkpoint.
#[pyfunction]
#[pyo3(signature = (config_text = ""))]
fn simulate<'py>(py: Python<'py>, config_text: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config(config_text)?;
    let recs = py.detach(|| experiment::run_experiment(&cfg)).py()?;
    recs.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("n", r.n)?;
            d.set_item("mean_excess_error", r.mean_excess_error)?;
            d.set_item("mean_l2_loss", r.mean_l2_loss)?;
            d.set_item("mean_train_error", r.mean_train_error)?;
            d.set_item("mean_train_loss", r.mean_train_loss)?;
            d.set_item("mean_h_dist", r.mean_h_dist)?;
            d.set_item("replications", r.replications)?;
            d.set_item("log10_err", r.log10_err)?;
            d.set_item("loglog_err", r.loglog_err)?;
            Ok(d)
        })
        .collect()
}

/// The same CSV the command-line `simulate` writes.
#[pyfunction]
#[pyo3(signature = (config_text = ""))]
fn simulate_csv(py: Python<'_>, config_text: &str) -> PyResult<String> {
    let cfg = config(config_text)?;
    let recs = py.detach(|| experiment::run_experiment(&cfg)).py()?;
    let mut out = Vec::new();
    experiment::write_aggregate_csv(&mut out, &recs).py()?;
    Ok(String::from_utf8(out).expect("CSV is ASCII"))
}

/// `(name, passed, detail)` for each invariant check.
#[pyfunction]
fn selftest(py: Python<'_>) -> PyResult<Vec<(String, bool, String)>> {
    let checks: Vec<Check> = py.detach(experiment::selftest).py()?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect())
}

#[pymodule]
fn margin_sgd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyHFunction>()?;
    m.add_class::<PySgd>()?;
    m.add_function(wrap_pyfunction!(glambda, m)?)?;
    m.add_function(wrap_pyfunction!(krr, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_csv, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
