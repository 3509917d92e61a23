//! Convex-QP core and the branch-and-bound MIQP solver built on it.
//!
//! The solver contract is the KKT residual bound, not the method: any
//! engine that satisfies [`qp::QpSolution`]'s residual guarantees can be
//! swapped in behind [`qp::solve_qp`]. The bundled implementation is the
//! reference and the default.

pub mod bnb;
pub mod linalg;
pub mod qp;

pub use bnb::{solve_miqp, BnbLimits, BnbReport, BnbStatus};
pub use qp::{
    solve_qp, KktResiduals, QpError, QpOptions, QpProblem, QpSolution, QpStatus, SparseRows,
    WarmStart,
};
