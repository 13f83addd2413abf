//! `system.json`: the single-snapshot input document.
//!
//! ```json
//! {
//!   "spec": {"f0": 50, "delta_f_max": 0.8, "rocof_max": 0.5, "p_loss_max": 1800},
//!   "snapshot": {"h_gen": 180000, "h_demand": 0, "p_loss": 1800},
//!   "services": [{"id": "FR1", "capacity_max": 1000, "ramp_duration": 3,
//!                 "activation_delay": 0, "headroom_cost": 0, "allocation": 200}],
//!   "chance": {"h_mu": 0, "sigma": 5000, "alpha": 0.99, "eta": 0.99}
//! }
//! ```
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so documents round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChanceSpec, FrService, Portfolio, SecuritySpec, SystemSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotFields {
    pub h_gen: f64,
    pub h_demand: f64,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEntry {
    pub id: String,
    pub capacity_max: f64,
    pub ramp_duration: f64,
    pub activation_delay: f64,
    pub headroom_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub spec: SecuritySpec,
    pub snapshot: SnapshotFields,
    pub services: Vec<ServiceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance: Option<ChanceSpec>,
}

/// Validated contents of a `system.json` document.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInput {
    pub spec: SecuritySpec,
    pub snapshot: SystemSnapshot,
    pub chance: Option<ChanceSpec>,
}

impl SystemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system file serialises")
    }

    /// Validates every field; a missing `allocation` counts as 0 MW.
    pub fn into_input(self) -> Result<SystemInput> {
        self.spec.validate()?;
        if let Some(chance) = &self.chance {
            chance.validate()?;
        }
        let (services, allocations): (Vec<FrService>, Vec<f64>) = self
            .services
            .into_iter()
            .map(|e| {
                (
                    FrService {
                        id: e.id,
                        capacity_max: e.capacity_max,
                        ramp_duration: e.ramp_duration,
                        activation_delay: e.activation_delay,
                        headroom_cost: e.headroom_cost,
                    },
                    e.allocation.unwrap_or(0.0),
                )
            })
            .unzip();
        let portfolio = Portfolio::new(services, allocations)?;
        let snapshot = SystemSnapshot::new(
            self.snapshot.h_gen,
            self.snapshot.h_demand,
            self.snapshot.p_loss,
            portfolio,
        )?;
        Ok(SystemInput { spec: self.spec, snapshot, chance: self.chance })
    }

    pub fn from_input(input: &SystemInput) -> Self {
        let snapshot = &input.snapshot;
        SystemFile {
            spec: input.spec,
            snapshot: SnapshotFields {
                h_gen: snapshot.h_gen,
                h_demand: snapshot.h_demand,
                p_loss: snapshot.p_loss,
            },
            services: snapshot
                .portfolio
                .iter()
                .map(|(s, allocation)| ServiceEntry {
                    id: s.id.clone(),
                    capacity_max: s.capacity_max,
                    ramp_duration: s.ramp_duration,
                    activation_delay: s.activation_delay,
                    headroom_cost: s.headroom_cost,
                    allocation: Some(allocation),
                })
                .collect(),
            chance: input.chance,
        }
    }
}

impl SystemInput {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SystemFile::load(path)?.into_input()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        SystemFile::from_json(text)?.into_input()
    }

    pub fn to_json(&self) -> String {
        SystemFile::from_input(self).to_json()
    }
}
