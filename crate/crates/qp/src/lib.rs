//! Sparse convex quadratic programming.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀQx + cᵀx
//! subject to  l ≤ Ax ≤ u
//! ```
//!
//! with `Q` symmetric positive semidefinite, by an operator-splitting (ADMM)
//! iteration on a Ruiz-equilibrated problem, followed by an active-set polish
//! that solves the equality-constrained subproblem on the identified active
//! set to high accuracy.
//!
//! ```
//! use chronos_qp::{solve_qp, QpProblem, Status};
//!
//! // minimize (x - 3)²  subject to  x ≤ 1
//! let p = QpProblem::from_triplets(1, &[(0, 0, 2.0)], vec![-6.0], &[(0, 0, 1.0)],
//!                                  vec![f64::NEG_INFINITY], vec![1.0]).unwrap();
//! let s = solve_qp(&p, 1e-6, 200_000).unwrap();
//! assert_eq!(s.status, Status::Optimal);
//! assert!((s.x[0] - 1.0).abs() < 1e-8);
//! ```

pub mod csc;
mod kkt;
pub mod ldl;
pub mod oracle;
mod polish;
pub mod problem;
mod scaling;
mod solver;

pub use csc::CscMatrix;
pub use kkt::{kkt_residuals, KktResiduals};
pub use oracle::enumerate_active_set_oracle;
pub use problem::QpProblem;
pub use solver::{solve_qp, Settings, Solver};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("row {row} has lower bound {lower} above upper bound {upper}")]
    InvalidBounds { row: usize, lower: f64, upper: f64 },
    #[error("quadratic term is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("quadratic term is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("problem too large for active-set enumeration: n = {n}, m = {m}")]
    OracleTooLarge { n: usize, m: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    /// Iteration limit reached; the best iterate is returned.
    MaxIter,
    /// A certificate of primal infeasibility was found.
    InfeasibleDetected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIter => "max_iter",
            Status::InfeasibleDetected => "infeasible_detected",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of a solve.
///
/// `y` follows the sign convention `Qx + c + Aᵀy = 0`: a positive multiplier
/// marks an active upper bound, a negative one an active lower bound.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub objective: f64,
    pub kkt: KktResiduals,
    /// Whether the returned point came from the active-set polish.
    pub polished: bool,
    /// Per-iteration fixed-point residual, when requested in [`Settings`].
    pub merit_log: Vec<f64>,
    /// Iterations at which the penalty parameter was changed.
    pub rho_updates: Vec<usize>,
}
