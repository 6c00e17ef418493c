use std::path::PathBuf;
use std::time::Duration;

use crate::model::Model;
use crate::{bnb, external, IlpError};

/// Feasibility tolerance used when re-checking any returned assignment.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Proven optimal.
    Optimal,
    /// Feasible incumbent; a time or node limit stopped the proof.
    Feasible,
    Infeasible,
    /// A limit was reached before any feasible assignment was found.
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Timeout => "timeout",
        }
    }

    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub elapsed: Duration,
    /// Best proven bound on the objective (in the model's own sense).
    pub best_bound: Option<f64>,
    pub hit_limit: bool,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    /// Indexed by [`crate::VarId::index`]; empty unless `status.has_solution()`.
    pub values: Vec<f64>,
    pub objective: f64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn value(&self, var: crate::VarId) -> f64 {
        self.values[var.index()]
    }

    pub(crate) fn without_assignment(status: Status, stats: SolveStats) -> Self {
        Solution { status, values: Vec::new(), objective: f64::NAN, stats }
    }
}

/// External solver configuration.
///
/// `command` is a template: `{lp}` and `{sol}` are replaced by the model and
/// solution file paths. The default template is `"{solver} {lp} {sol}"`
/// where `{solver}` is `executable`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalSolver {
    pub executable: PathBuf,
    pub args: Vec<String>,
    /// Keep the LP/solution files in this directory instead of a temp dir.
    pub work_dir: Option<PathBuf>,
}

impl ExternalSolver {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        ExternalSolver {
            executable: executable.into(),
            args: vec!["{lp}".into(), "{sol}".into()],
            work_dir: None,
        }
    }

    /// Reads the executable from [`SOLVER_ENV`].
    pub fn from_env() -> Result<Self, IlpError> {
        match std::env::var_os(SOLVER_ENV) {
            Some(p) if !p.is_empty() => Ok(Self::new(PathBuf::from(p))),
            _ => Err(IlpError::SolverMissing { key: SOLVER_ENV.into(), path: None }),
        }
    }
}

/// Environment variable naming the external solver executable.
pub const SOLVER_ENV: &str = "MACGEN_SOLVER";

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Backend {
    #[default]
    Internal,
    External(ExternalSolver),
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub backend: Backend,
    /// Starting assignment, indexed like the model's variables. Ignored if
    /// it fails the feasibility check.
    pub initial: Option<Vec<f64>>,
    /// Stop once the absolute gap between incumbent and bound is below this.
    pub abs_gap: f64,
}

impl SolveOptions {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn with_node_limit(mut self, limit: usize) -> Self {
        self.node_limit = Some(limit);
        self
    }

    pub fn with_initial(mut self, values: Vec<f64>) -> Self {
        self.initial = Some(values);
        self
    }
}

/// Solves `model` with the selected backend.
///
/// Any assignment that comes back is re-checked against every bound and
/// constraint at [`CHECK_TOL`]; a failed check is reported as an error
/// rather than returned.
pub fn solve(model: &Model, opts: &SolveOptions) -> Result<Solution, IlpError> {
    let sol = match &opts.backend {
        Backend::Internal => bnb::branch_and_bound(model, opts)?,
        Backend::External(ext) => external::solve_external(model, ext, opts)?,
    };
    if sol.status.has_solution() {
        if let Err(v) = model.check(&sol.values, CHECK_TOL) {
            return Err(IlpError::Inconsistent(v.to_string()));
        }
    }
    Ok(sol)
}
