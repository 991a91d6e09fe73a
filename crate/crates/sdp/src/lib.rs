//! A small dense interior-point solver for block-diagonal semidefinite programs.
//!
//! Problems are stated in trace form:
//!
//! ```text
//! minimize    sum_b <C_b, X_b>
//! subject to  sum_b <A_kb, X_b>  (<=, =, >=)  b_k      for every constraint k
//!             X_b PSD                                     for every block b
//! ```
//!
//! Inequalities are turned into equalities with nonnegative slack variables
//! before the solve. The solver is a Mehrotra predictor-corrector method on the
//! HKM search direction and is aimed at instances with blocks of a few dozen
//! rows and at most a few hundred constraints.

mod certificate;
mod error;
mod instance;
mod solver;
pub mod text;

pub use certificate::{check_certificates, SolveCertificate};
pub use error::SdpError;
pub use instance::{Entry, LinearConstraint, SdpInstance, Sense};
pub use solver::{solve_sdp, IterationRecord, SdpSolution, SolveOutput, SolverOptions};
