//! Saddlepoint approximations for sample paths of recursively compounded
//! processes.
//!
//! A recursively compounded process builds each step `X_n` from an
//! innovation plus contributions driven by earlier coordinates. The sample-path saddlepoint
//! approximation can be computed on the joint CGF of `(X_1, …, X_N)` given
//! `X_0`, or as a product of per-step approximations of the conditional laws.
//! The two agree, and this crate computes both and checks that they do.
//!
//! Modules:
//! - [`cgf`]: builtin CGFs with exact derivatives and their composition algebra.
//! - [`model`]: process declarations, step CGFs, the τ map and the joint CGF.
//! - [`solver`]: damped Newton saddlepoint solver and the two SPA routes.
//! - [`tilting`]: exponential tilting of distributions and whole processes.
//! - [`oracle`]: exact pmfs, simulation, batch verification and INAR fitting.
//! - [`cli`]: spec files and the command implementations behind the binary.

pub mod cgf;
pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod pmf;
pub mod solver;
pub mod taylor;
pub mod tilting;

pub use cgf::{CgfExpr, CgfSpec, CgfValue};
pub use error::{Error, Result};
pub use model::{Contribution, ContributionKind, HistoryMode, ProcessSpec, SamplePath, StepSpec, ValueType};
pub use pmf::PmfTable;
pub use solver::{SaddlepointResult, SolverConfig, SpaStatus};
pub use taylor::TaylorScalar;
