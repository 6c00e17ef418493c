//! TOML configuration: gate delays, compressor port delays, FDC
//! coefficients, area weights and solver limits. Every section is optional;
//! a section that is present must be complete.
//!
//! ```toml
//! [fdc]
//! k0 = 0.5
//! k1 = 0.5
//! k2 = 1.0
//! k3 = 0.5
//! b = 1.0
//!
//! [solver]
//! time_limit_s = 600
//! ```

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cpa::FdcModel;
use crate::ilp::{Backend, ExternalSolver};
use crate::tech::{AreaWeights, DelayTable, GateDelays};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Wall-clock limit per ILP solve.
    pub time_limit_s: f64,
    /// Node limit for the stage ILP; unset picks one from the width.
    pub assign_nodes: Option<usize>,
    /// Node limit for the wiring ILP.
    pub wire_nodes: usize,
    /// Wiring models with more binaries keep the heuristic wiring.
    pub wire_max_binaries: usize,
    /// Cell evaluations for the wiring swap search; unset picks one from
    /// the width.
    pub search_budget: Option<u64>,
    /// External solver executable. Overrides the environment variable.
    pub external: Option<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_limit_s: 3600.0,
            assign_nodes: None,
            wire_nodes: 60,
            wire_max_binaries: 6_000,
            search_budget: None,
            external: None,
        }
    }
}

impl SolverConfig {
    pub fn time_limit(&self) -> Duration {
        Duration::from_secs_f64(self.time_limit_s.max(0.0))
    }

    pub fn backend(&self) -> Backend {
        match &self.external {
            Some(p) => Backend::External(ExternalSolver::new(p)),
            None => Backend::Internal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gate_delays: GateDelays,
    /// Compressor port delays; derived from `gate_delays` when absent.
    pub ct_delays: Option<DelayTable>,
    pub fdc: FdcModel,
    pub area: AreaWeights,
    pub solver: SolverConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn delay_table(&self) -> DelayTable {
        self.ct_delays.unwrap_or_else(|| DelayTable::from_gate_delays(&self.gate_delays))
    }

    pub fn validate(&self) -> Result<()> {
        self.gate_delays.validate().map_err(Error::Config)?;
        self.area.validate().map_err(Error::Config)?;
        if let Some(d) = &self.ct_delays {
            d.validate().map_err(Error::Config)?;
        }
        let f = &self.fdc;
        if ![f.k0, f.k1, f.k2, f.k3, f.b].iter().all(|x| x.is_finite()) {
            return Err(Error::Config("FDC coefficients must be finite".into()));
        }
        if !(self.solver.time_limit_s.is_finite() && self.solver.time_limit_s >= 0.0) {
            return Err(Error::Config("solver.time_limit_s must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip_and_partial_sections() {
        let mut c = Config::default();
        c.fdc.k2 = 2.0;
        c.solver.assign_nodes = Some(10);
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        let c = Config::from_toml("[solver]\ntime_limit_s = 5\n").unwrap();
        assert_eq!(c.solver.time_limit(), Duration::from_secs(5));
        assert!(Config::from_toml("[fdc]\nk0 = 1.0\n").is_err());
        assert!(Config::from_toml("colour = 1").is_err());
        assert!(Config::from_toml("[solver]\ntime_limit_s = -1\n").is_err());
    }
}
