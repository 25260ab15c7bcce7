use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite coefficient at y = {y:?}")]
    NonFiniteCoefficient { y: Vec<f64> },

    #[error("non-finite position after step from x = {x:?}")]
    StepBlowUp { x: Vec<f64> },

    #[error("problem is not uniformly elliptic: min eigenvalue {min_eigenvalue:e} at y = {y:?}")]
    NotElliptic { y: Vec<f64>, min_eigenvalue: f64 },

    #[error("{failures} of {particles} trajectories failed (limit 1%); step size too large for this problem?")]
    TooManyFailures { failures: usize, particles: usize },

    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDivergence { residual: f64, iterations: usize, history: Vec<f64> },

    #[error("grid too coarse: density reached {min_value:e} at node {node}; increase n")]
    DiscretizationTooCoarse { min_value: f64, node: usize },

    #[error("expression error: {0}")]
    Expression(String),
}
