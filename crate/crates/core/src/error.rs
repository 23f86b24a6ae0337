use thiserror::Error;

use crate::control::ControlRun;
use crate::obstacle::ObstacleSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("active-set iteration did not terminate after {iterations} iterations (kkt residual {residual:.3e})")]
    ObstacleNonConvergence {
        iterations: usize,
        residual: f64,
        last: Box<ObstacleSolution>,
    },

    #[error("active-set iteration revisited the set pair of iteration {first_seen} at iteration {iteration}")]
    Cycling { first_seen: usize, iteration: usize },

    #[error("semismooth Newton method did not reach the tolerance within {} iterations", .0.iterations.len())]
    ControlNonConvergence(Box<ControlRun>),

    #[error("subspaces do not enclose a positive angle (c0 = {c0:.17})")]
    AngleDegenerate { c0: f64 },

    #[error("dimension {dim} exceeds the limit {limit} of {what}")]
    SizeLimit {
        what: &'static str,
        dim: usize,
        limit: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
