use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("poisson right-hand side has nonzero mean {mean:e}; check the compatibility constant")]
    Incompatible { mean: f64 },

    /// The state left the cone chi + i ddbar u > 0.
    #[error("non-admissible state: smallest eigenvalue {value:e} at point {index}")]
    Admissibility { index: usize, value: f64 },

    #[error("parabolicity lost: F'({rho:e}) = {deriv:e}")]
    Parabolicity { rho: f64, deriv: f64 },

    #[error("speed function evaluated outside its domain at rho = {rho:e}")]
    Domain { rho: f64 },

    #[error("invalid speed function: {0}")]
    InvalidSpeed(String),

    #[error("singular reduction: 2n - 2 - n*beta vanishes for n = {n}, beta = {beta}")]
    SingularReduction { n: usize, beta: f64 },

    #[error("invalid background metric: {0}")]
    InvalidMetric(String),

    #[error("no convergence after {iterations} iterations, last residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step rejected {retries} times, last error: {last}")]
    StepFailed { retries: usize, last: Box<Error> },

    #[error("inadmissible stationary solution ({0}); increase the resolution or reduce the amplitude of f")]
    OracleInadmissible(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("field file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
