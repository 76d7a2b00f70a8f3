//! Condensed quadratic-program assembly and solution.
//!
//! * [`problem`] — the QP container, solution record, and a plain-text
//!   dump/parse format for offline inspection
//! * [`build`] — condensing the horizon tracking problem into one QP
//! * [`solve`] — the production active-set solver with warm starts
//! * [`oracle`] — a brute-force reference solver (active-set enumeration)
//!   kept deliberately independent of [`solve`], used by the test suites

pub mod build;
pub mod oracle;
pub mod problem;
pub mod solve;

pub use build::{
    approach_target, build_qp, instance_epsilon, rate_matrix, terminal_target, tikhonov_epsilon,
    BuildError, MpcDevice, MpcInstance, QuadCost, SocReach,
};
pub use oracle::{oracle_solve, OracleError, ORACLE_MAX_ROWS, ORACLE_MAX_VARS};
pub use problem::{QpProblem, QpSolution, SolveStatus};
pub use solve::{solve, ActiveSetSolver, DEFAULT_MAX_ITER, DEFAULT_TOL};
