//! Solvers for constrained variational inequalities: find `x* ∈ C` with
//! `⟨x − x*, F(x*)⟩ ≥ 0` for all `x ∈ C`, where `C` is the intersection of an
//! affine set `Cx = d` and inequality constraints.
//!
//! The main entry point is [`solvers::run`], configured by a
//! [`solvers::RunConfig`] and fed a [`problems::ProblemSpec`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::single_range_in_vec_init)]

pub mod barriers;
pub mod baselines;
pub mod geometry;
pub mod metrics;
pub mod oracle;
pub mod problems;
pub mod solvers;
pub mod verify;

pub use barriers::BarrierKind;
pub use baselines::{run_baseline, BaselineConfig, BaselineMethod, BaselineRun};
pub use geometry::{EqualityGeometry, InequalitySet};
pub use metrics::IterationRecord;
pub use problems::{make_2d_bg, make_hbg, make_hbg_v2, Operator, ProblemSpec};
pub use solvers::{run, Algorithm, RunConfig, SolverError, Termination, Trajectory};
