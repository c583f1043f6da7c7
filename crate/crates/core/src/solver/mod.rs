//! Dense convex solvers shared by both optimization phases.

mod linalg;
mod nnls;
mod qp;

pub use nnls::{solve_nnls, NnlsSolution};
pub use qp::{
    solve_qp, solve_qp_with, KktResiduals, QpOptions, QpSolution, QpStatus, QuadraticProgram,
};
