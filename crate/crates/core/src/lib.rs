//! Regularized kernel least-squares SGD on a one-dimensional classification
//! problem satisfying a hard margin condition, with the population and
//! empirical ridge solutions and the quantities needed to check exponential
//! convergence of the classification error.

pub mod bounds;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod krr;
pub mod metrics;
mod numeric;
pub mod popridge;
pub mod sgd;

pub use bounds::{
    bernstein_tail, mc_concentration_check, noise_constants, pinelis_tail, schedule_constants, thm_error_bounds,
    weak_margin_rate, BoundParams, ErrorBounds, NoiseConstants, OperatorA,
};
pub use dist::{LabeledSample, MarginDistribution};
pub use error::{Error, Result};
pub use experiment::{fit_slope, run_experiment, AggregateRecord, Estimator, ExperimentConfig};
pub use kernel::{h_dist, h_inner, h_norm, FnPredictor, HFunction, KernelKind, KernelSpec, Predictor};
pub use krr::{fit_krr, lemma2_gap, u_n, v_hs, KrrFit, Lemma2Gap};
pub use metrics::{evaluate, excess_risk_01, l2_loss, train_metrics, EvalReport};
pub use numeric::{linspace, pairwise_mean, pairwise_sum};
pub use popridge::{
    margin_delta, optimality_residual, quad_grid, solve_glambda, sup_gap, MarginReport, QuadratureGrid,
};
pub use sgd::{new_state, run, RunRecord, SgdState, Snapshot, StepSchedule};
