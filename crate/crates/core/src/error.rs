use thiserror::Error;

/// Errors produced by the approximation, conditioning and training routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a knot vector needs at least 2 knots, got {0}")]
    TooFewKnots(usize),

    #[error("knot vector must start at 0 and end at 1, got [{first}, {last}]")]
    Endpoints { first: f64, last: f64 },

    #[error("knots must increase with gap >= {gap_floor:e}; violated between knots {index} and {}", index + 1)]
    Ordering { index: usize, gap_floor: f64 },

    #[error("basis index {index} out of range for {len} knots")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("expected {expected} coefficients, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("quadrature size {s} is too small for {n} knots (need s >= {min})")]
    QuadratureTooSmall { s: usize, n: usize, min: usize },

    #[error(
        "least-squares normal matrix is singular at basis function {index}: the quadrature grid \
         (s = {s}) does not resolve the cells around knot {index}; use a larger quadrature size"
    )]
    DegenerateNormalMatrix { index: usize, s: usize },

    #[error("tridiagonal system is singular at row {0}")]
    SingularTridiagonal(usize),

    #[error("matrix is singular or numerically rank deficient")]
    SingularMatrix,

    #[error(
        "mesh constant shooting did not converge after {iters} bisection steps \
         (bracket [{lo}, {hi}], residual {residual:e})"
    )]
    ShootingFailed {
        iters: usize,
        lo: f64,
        hi: f64,
        residual: f64,
    },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("non-finite loss or gradient at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown target '{0}'")]
    UnknownTarget(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
