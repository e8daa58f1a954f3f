//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient matrix not symmetric: max |a12 - a21| = {max_asymmetry:.3e}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("coefficient not uniformly elliptic: smallest eigenvalue {kappa:.6e} <= 0")]
    NotElliptic { kappa: f64 },

    #[error(
        "cell solver diverged in direction {direction} at slice {slice}: \
         relative residual {residual:.3e} after {iterations} iterations"
    )]
    SolverDiverged {
        direction: usize,
        slice: usize,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "sampled Lipschitz ratio {observed:.6} exceeds declared constant {declared:.6} by more than 1%"
    )]
    LipschitzViolation { observed: f64, declared: f64 },

    #[error("Poisson right-hand side incompatible with Neumann walls: |mean| = {mean:.3e}, ||rhs|| = {norm:.3e}")]
    IncompatibleRhs { mean: f64, norm: f64 },

    #[error("CFL violation: advective Courant number {courant:.3} exceeds {limit}")]
    CflViolation { courant: f64, limit: f64 },

    #[error("density bound violated after transport step: range [{min:.6}, {max:.6}] outside declared [{lo:.6}, {hi:.6}]")]
    BoundViolation { min: f64, max: f64, lo: f64, hi: f64 },

    #[error("path has {n_steps} steps, not divisible by coarsening factor {factor}")]
    IndivisibleSteps { n_steps: usize, factor: usize },

    #[error("diffusion solve diverged: relative residual {residual:.3e} after {iterations} iterations")]
    DiffusionSolveDiverged { iterations: usize, residual: f64 },

    #[error("oscillation unresolved: eps/h = {ratio:.2} < 8 (eps = {eps}, h = {h})")]
    ResolutionViolation { eps: f64, h: f64, ratio: f64 },

    #[error("temporal oscillation unresolved: dt = {dt} > eps/8 = {}", eps / 8.0)]
    TimeResolutionViolation { eps: f64, dt: f64 },

    #[error("experiment plan infeasible: {reason}")]
    PlanInfeasible { reason: String },

    #[error("rate fit needs >= 3 strictly positive errors, got {reason}")]
    DegenerateInput { reason: String },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad snapshot file: {0}")]
    BadSnapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code contract: 2 for configuration problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::PlanInfeasible { .. }
            | Error::DegenerateInput { .. }
            | Error::ResolutionViolation { .. }
            | Error::TimeResolutionViolation { .. } => 2,
            _ => 1,
        }
    }
}
