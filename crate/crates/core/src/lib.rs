//! Solvers for multi-stage stochastic variational inequalities on finite
//! scenario sets.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: probability spaces, filtrations and the projections onto
//!   the nonanticipative subspace `N` and its complement `M`;
//! * [`problem`]: affine monotone mappings, box constraints and residuals;
//! * [`inner`]: the per-iteration proximal subproblem;
//! * [`pha`]: the Halpern-type relaxed inertial inexact progressive hedging
//!   method and the variants it degenerates to;
//! * [`ppa`]: the matching proximal point iteration for maximal monotone
//!   operators and the harness tying the two together;
//! * [`examples`] and [`bench`]: instance generators and benchmark grids.

pub mod bench;
pub mod error;
pub mod examples;
pub mod field;
pub mod inner;
pub mod pha;
pub mod ppa;
pub mod problem;
pub mod scenario;

#[cfg(test)]
mod test_support;

pub use error::{MsviError, Result};
pub use field::RandomField;
pub use inner::{solve_subproblem, InnerConfig, SubproblemSolution};
pub use pha::{
    builtin_schedule, run_solver, step_algorithm1, theta_hat, IterationState, ParamSchedule,
    RunConfig, RunReport, RunStatus, SolverVariant,
};
pub use problem::{AffineMapping, BoxConstraint, MsviInstance, NaturalResidual};
pub use scenario::{
    conditional_expectation, Filtration, Partition, ScenarioSpace, ScenarioTree, StageLayout,
};
