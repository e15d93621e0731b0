use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value at index {index} in {what}")]
    NonFinite { what: &'static str, index: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("constraint violated: kappa = {kappa} but 4*alpha*nu*m = {product}")]
    ConstraintViolation { kappa: f64, product: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e}")]
    NormDrift { drift: f64, tolerance: f64 },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("wavefunction vanishes identically")]
    ZeroWavefunction,
    #[error("negative density {value:e} at index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("time {t} outside interpolant window [{start}, {end}]")]
    OutOfTimeRange { t: f64, start: f64, end: f64 },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("density is not normalizable (integral {0})")]
    NonNormalizable(f64),
    #[error("density vanishes at index {0}; ratio undefined")]
    ZeroDensity(usize),
    #[error("no convergence after {iterations} iterations (last update {last_update:e})")]
    NonConvergence { iterations: usize, last_update: f64 },
    #[error("hermiticity violated: imaginary part {0:e}")]
    Hermiticity(f64),
    #[error("variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),
    #[error("sampler diverged at step {0}")]
    Divergence(usize),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
}
