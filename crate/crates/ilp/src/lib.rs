//! Mixed-integer linear models: construction, LP-format I/O and solving.
//!
//! The built-in solver is a depth-first branch-and-bound over LP
//! relaxations; an external command-line solver can be used instead via
//! [`Backend::External`].

use std::path::PathBuf;

mod bnb;
mod external;
pub mod lp_format;
mod model;
mod solve;

pub use external::{parse_solution, ParsedSolution};
pub use lp_format::{parse_lp, write_lp};
pub use model::{Constraint, LinExpr, Model, ObjSense, Objective, Sense, VarId, VarKind, Variable, Violation};
pub use solve::{solve, Backend, ExternalSolver, Solution, SolveOptions, SolveStats, Status, CHECK_TOL, SOLVER_ENV};

#[derive(Debug, thiserror::Error)]
pub enum IlpError {
    #[error("duplicate name: {0}")]
    DuplicateName(String),
    #[error("invalid name: {0:?}")]
    InvalidName(String),
    #[error("invalid bounds for {0}")]
    InvalidBounds(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("external solver not found (set {key}){}", path.as_ref().map(|p| format!(": {}", p.display())).unwrap_or_default())]
    SolverMissing { key: String, path: Option<PathBuf> },
    #[error("solver returned an assignment that fails the model: {0}")]
    Inconsistent(String),
    #[error("model is unbounded")]
    Unbounded,
    #[error("LP backend: {0}")]
    Backend(String),
    #[error("external solver failed: {0}")]
    SolverFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
