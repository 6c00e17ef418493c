//! Generator and verifier for gate-level unsigned multipliers, fused
//! multiply-accumulators and prefix adders.
//!
//! The flow is: partial-product generation ([`ppg`]), per-column compressor
//! counts ([`ct_plan`]), stage assignment ([`ct_assign`]), port ordering
//! inside each stage ([`ct_wire`]), the final prefix adder ([`cpa`]), and
//! elaboration into a gate netlist ([`netlist`]). [`verify`] holds the
//! simulation and brute-force oracles, [`pipeline`] strings it together.

pub mod config;
pub mod cpa;
pub mod ct_assign;
pub mod ct_plan;
pub mod ct_wire;
pub mod netlist;
pub mod par;
pub mod pipeline;
pub mod ppg;
pub mod tech;
pub mod verify;

pub use macgen_ilp as ilp;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid width {0}: must be at least 2")]
    InvalidWidth(usize),
    #[error("accumulator width {acc} exceeds 2*{width}")]
    InvalidAccWidth { width: usize, acc: usize },
    #[error("stage limit {given} is below the lower bound {bound}")]
    StageLimit { given: usize, bound: usize },
    #[error("ILP: {0}")]
    Ilp(#[from] ilp::IlpError),
    #[error("ILP model is infeasible: {0}")]
    Infeasible(String),
    #[error("solver stopped without a feasible assignment: {0}")]
    NoIncumbent(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("wiring: {0}")]
    Wiring(String),
    #[error("prefix graph: {0}")]
    Prefix(String),
    #[error("netlist: {0}")]
    Netlist(String),
    #[error("combinational loop through nets {0:?}")]
    Cycle(Vec<String>),
    #[error("fit: {0}")]
    Fit(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("verification: {0}")]
    Verify(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
