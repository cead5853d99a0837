//! Solver for first-order linear transport equations in ultraweak form.
//!
//! The discrete trial space is the image of the test space under the adjoint
//! transport operator, which makes the Petrov-Galerkin pair optimally stable:
//! the discrete solution is the best L2 approximation of the exact solution in
//! the trial space. On top of the full-order solver sits a reduced-basis layer
//! for affinely parametrized advection fields (strong greedy sampling, offline/
//! online splitting, hierarchical error estimation).

pub mod quad;

pub mod assembly;

pub mod fe1d;

pub mod grid;

pub mod problem;

pub mod solver;

pub mod analysis;

pub mod rb;

pub mod cli;

/// Errors reported across the crate; `exit_code` groups them for the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A face sees both inflow and outflow in the sampled advection field.
    #[error("face {side} of dimension {dim} has mixed advection sign (b*n in [{min:.3e}, {max:.3e}])")]
    MixedSignFace { dim: usize, side: &'static str, min: f64, max: f64 },
    /// An evaluation point lies outside the solution's domain.
    #[error("point {point:?} is outside the domain")]
    PointOutOfDomain { point: Vec<f64> },
    /// Catalog lookup failed.
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    /// A well-posedness condition from the continuous theory is violated.
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    /// Test/trial space pair does not match the grid or each other.
    #[error("inconsistent spaces: {0}")]
    InconsistentSpaces(String),
    /// Requested quadrature order cannot integrate the basis products.
    #[error("quadrature order {q} too low (need at least {need})")]
    QuadratureOrderTooLow { q: usize, need: usize },
    /// The normal-equation matrix failed its Cholesky factorization.
    #[error("matrix not symmetric positive definite (pivot {pivot:.3e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    /// Iterative fallback did not reach the requested tolerance.
    #[error("no convergence after {iters} iterations (relative residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    /// Post-processing needs polynomial order at least two.
    #[error("polynomial order {p} too low for post-processing (need p >= 2)")]
    OrderTooLow { p: usize },
    /// Reduced basis became numerically dependent.
    #[error("reduced basis degenerate (Gram condition {cond:.3e})")]
    BasisDegenerate { cond: f64 },
    /// Hierarchical estimate called on models that are not nested.
    #[error("models not nested: {0}")]
    NotNested(String),
    /// Reduced system solve failed.
    #[error("singular reduced system of size {n}")]
    SingularReducedSystem { n: usize },
    /// Malformed input (CLI flags, JSON problem files, model files).
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 2 for configuration/problem errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotSpd { .. }
            | Error::NoConvergence { .. }
            | Error::BasisDegenerate { .. }
            | Error::SingularReducedSystem { .. } => 3,
            _ => 2,
        }
    }
}
