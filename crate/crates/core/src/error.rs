use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{source} at node {coords:?}")]
    Sample {
        coords: Vec<f64>,
        #[source]
        source: ExprError,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("analytic mode requested but {0} has no expression providers")]
    MissingAnalytic(&'static str),
    #[error("metric is not positive definite at node {coords:?}")]
    NotPositiveDefinite { coords: Vec<f64> },
    #[error("weight must be positive, found {value} at node {coords:?}")]
    NonPositiveWeight { value: f64, coords: Vec<f64> },
    #[error("support violation: {0}")]
    Support(String),
    #[error("epsilon {eps} is too large: {reason}")]
    EpsilonTooLarge { eps: f64, reason: String },
    #[error("δ = {delta} is not below δ₀ = {delta0}")]
    DeltaTooLarge { delta: f64, delta0: f64 },
    #[error("grid cannot resolve the construction: {0}; refine the grid")]
    Resolution(String),
    #[error("N = {big_n} is not admissible in dimension {n}: {reason}")]
    Dimension {
        big_n: f64,
        n: usize,
        reason: &'static str,
    },
    #[error(
        "conjugate gradient did not converge in {iterations} iterations (residual {residual:e})"
    )]
    Solver { iterations: usize, residual: f64 },
    #[error("model `{0}` is not certified for this check")]
    Uncertified(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
