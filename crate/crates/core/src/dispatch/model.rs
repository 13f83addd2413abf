//! `case.json` and `schedule.json` documents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::model::{ChanceSpec, FrService, SecurityReport, SecuritySpec};
use crate::reference;

/// A class of identical thermal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenUnit {
    pub class: String,
    /// Number of identical units in the class.
    pub count: u32,
    /// Pmax (MW).
    pub rated_power: f64,
    /// Minimum stable generation of one committed unit (MW).
    pub min_stable: f64,
    /// Cost per committed unit and hour.
    pub no_load_cost: f64,
    /// Cost per MWh.
    pub marginal_cost: f64,
    pub startup_cost: f64,
    /// Hc (s).
    pub inertia_constant: f64,
    /// Most FR one unit can hold in headroom (MW).
    pub max_fr_deliverable: f64,
    /// FR product this class offers, if any.
    #[serde(default)]
    pub fr_service_id: Option<String>,
    /// Whether committed units may run between `min_stable` and `rated_power`;
    /// otherwise a committed unit runs at rated output.
    #[serde(default = "default_true")]
    pub part_load: bool,
    /// Model each unit with its own binary so the largest-loss coupling sees
    /// individual outputs; otherwise the class is aggregated into one count.
    #[serde(default)]
    pub individual: bool,
    #[serde(default)]
    pub min_up_periods: u32,
    #[serde(default)]
    pub min_down_periods: u32,
}

fn default_true() -> bool {
    true
}

impl GenUnit {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("units[{}].{name}", self.class);
        for (name, value) in [
            ("rated_power", self.rated_power),
            ("min_stable", self.min_stable),
            ("no_load_cost", self.no_load_cost),
            ("marginal_cost", self.marginal_cost),
            ("startup_cost", self.startup_cost),
            ("inertia_constant", self.inertia_constant),
            ("max_fr_deliverable", self.max_fr_deliverable),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::invalid(
                    field(name),
                    format!("must be finite and non-negative, got {value}"),
                ));
            }
        }
        if self.min_stable > self.rated_power {
            return Err(Error::invalid(
                field("min_stable"),
                format!("{} exceeds rated power {}", self.min_stable, self.rated_power),
            ));
        }
        Ok(())
    }

    /// Inertia contributed by one committed unit (MW·s).
    pub fn unit_inertia(&self) -> f64 {
        self.inertia_constant * self.rated_power
    }

    /// Lowest output of one committed unit.
    pub fn min_output(&self) -> f64 {
        if self.part_load {
            self.min_stable
        } else {
            self.rated_power
        }
    }
}

/// Demand-inertia uncertainty as a share of the per-period forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceLevels {
    /// σ / H_μ.
    pub sigma_ratio: f64,
    pub alpha: f64,
    pub eta: f64,
}

/// A desk-scale commitment problem over hourly periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchCase {
    pub units: Vec<GenUnit>,
    /// MW per period.
    pub demand: Vec<f64>,
    /// MW per period; empty means no wind.
    #[serde(default)]
    pub wind_available: Vec<f64>,
    pub spec: SecuritySpec,
    #[serde(default)]
    pub chance: Option<ChanceLevels>,
    pub fr_catalog: Vec<FrService>,
    pub periods: usize,
    /// Demand inertia forecast present in every period (MW·s).
    #[serde(default)]
    pub h_demand: f64,
    /// Share of demand that contributes inertia with the demand inertia constant.
    #[serde(default)]
    pub demand_inertia_fraction: f64,
    /// Stand-alone FR providers such as batteries: service id to MW available
    /// without any unit headroom.
    #[serde(default)]
    pub external_fr: BTreeMap<String, f64>,
}

pub const MAX_PERIODS: usize = 48;

impl DispatchCase {
    pub fn from_json(text: &str) -> Result<Self> {
        let case: DispatchCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(1..=MAX_PERIODS).contains(&self.periods) {
            return Err(Error::invalid(
                "periods",
                format!("must be between 1 and {MAX_PERIODS}, got {}", self.periods),
            ));
        }
        if self.demand.len() != self.periods {
            return Err(Error::invalid(
                "demand",
                format!("{} values for {} periods", self.demand.len(), self.periods),
            ));
        }
        if !self.wind_available.is_empty() && self.wind_available.len() != self.periods {
            return Err(Error::invalid(
                "wind_available",
                format!("{} values for {} periods", self.wind_available.len(), self.periods),
            ));
        }
        if let Some(d) = self.demand.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("demand", format!("must be positive, got {d}")));
        }
        if let Some(w) = self.wind_available.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("wind_available", format!("must be non-negative, got {w}")));
        }
        for (name, v) in
            [("h_demand", self.h_demand), ("demand_inertia_fraction", self.demand_inertia_fraction)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if let Some(c) = &self.chance {
            if !(c.sigma_ratio >= 0.0 && c.sigma_ratio.is_finite()) {
                return Err(Error::invalid(
                    "chance.sigma_ratio",
                    format!("must be non-negative, got {}", c.sigma_ratio),
                ));
            }
            for p in [c.alpha, c.eta] {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::ProbabilityOutOfRange(p));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for s in &self.fr_catalog {
            s.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::invalid("fr_catalog", format!("duplicate id `{}`", s.id)));
            }
        }
        for (id, &mw) in &self.external_fr {
            if !ids.contains(id.as_str()) {
                return Err(Error::invalid("external_fr", format!("`{id}` is not in the catalog")));
            }
            if !(mw >= 0.0 && mw.is_finite()) {
                return Err(Error::invalid(
                    format!("external_fr.{id}"),
                    format!("must be non-negative, got {mw}"),
                ));
            }
        }
        let mut classes = BTreeSet::new();
        for u in &self.units {
            u.validate()?;
            if !classes.insert(u.class.as_str()) {
                return Err(Error::invalid("units", format!("duplicate class `{}`", u.class)));
            }
            if let Some(id) = &u.fr_service_id {
                if !ids.contains(id.as_str()) {
                    return Err(Error::invalid(
                        format!("units[{}].fr_service_id", u.class),
                        format!("`{id}` is not in the catalog"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn wind(&self, t: usize) -> f64 {
        self.wind_available.get(t).copied().unwrap_or(0.0)
    }

    /// Demand inertia forecast H_μ in period `t` (MW·s).
    pub fn demand_inertia(&self, t: usize) -> f64 {
        self.h_demand + self.demand_inertia_fraction * self.demand[t] * reference::DEMAND_INERTIA_CONSTANT
    }

    /// Chance parameters of period `t`, if the case is chance-constrained.
    pub fn chance_in(&self, t: usize) -> Option<ChanceSpec> {
        self.chance.map(|c| {
            let h_mu = self.demand_inertia(t);
            ChanceSpec { h_mu, sigma: c.sigma_ratio * h_mu, alpha: c.alpha, eta: c.eta }
        })
    }

    /// Stand-alone capacity of service `id` (MW).
    pub fn external(&self, id: &str) -> f64 {
        self.external_fr.get(id).copied().unwrap_or(0.0)
    }
}

/// Per-class outcome in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDispatch {
    pub class: String,
    pub committed: u32,
    /// Total output of the committed units (MW).
    pub output: f64,
    /// FR held in headroom (MW).
    pub fr: f64,
    pub startups: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceAllocation {
    pub id: String,
    pub mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSchedule {
    pub demand: f64,
    pub wind_used: f64,
    pub curtailment: f64,
    pub units: Vec<ClassDispatch>,
    /// R_s in catalog order.
    pub fr: Vec<ServiceAllocation>,
    /// Generator inertia (MW·s).
    pub h_gen: f64,
    /// Demand inertia forecast (MW·s).
    pub h_demand: f64,
    /// Largest single infeed (MW).
    pub p_loss: f64,
    pub cost: f64,
    pub security: SecurityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub status: SolveStatus,
    pub total_cost: f64,
    /// Proven lower bound on the optimal cost.
    pub bound: f64,
    pub gap: f64,
    pub node_count: usize,
    pub periods: Vec<PeriodSchedule>,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn total_curtailment(&self) -> f64 {
        self.periods.iter().map(|p| p.curtailment).sum()
    }

    pub fn is_secure(&self) -> bool {
        self.periods.iter().all(|p| p.security.is_secure())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case() -> DispatchCase {
        reference::gb_dispatch_case(25_000.0, 5_000.0)
    }

    #[test]
    fn reference_case_is_valid_and_round_trips() {
        let c = case();
        c.validate().unwrap();
        assert_eq!(DispatchCase::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_inconsistent_cases() {
        let mut c = case();
        c.periods = 2;
        assert!(c.validate().is_err());
        let mut c = case();
        c.units[2].fr_service_id = Some("FFR".into());
        assert!(c.validate().is_err());
        let mut c = case();
        c.external_fr.insert("nope".into(), 1.0);
        assert!(c.validate().is_err());
        let mut c = case();
        c.units.push(c.units[0].clone());
        assert!(c.validate().is_err());
        let mut c = case();
        c.demand[0] = 0.0;
        assert!(c.validate().is_err());
        let mut c = case();
        c.chance = Some(ChanceLevels { sigma_ratio: 0.1, alpha: 1.0, eta: 0.9 });
        assert_eq!(c.validate(), Err(Error::ProbabilityOutOfRange(1.0)));
        let mut u = c.units[0].clone();
        u.min_stable = u.rated_power + 1.0;
        assert!(u.validate().is_err());
        assert!(DispatchCase::from_json(r#"{"units": []}"#).is_err());
    }

    #[test]
    fn demand_inertia_follows_the_fraction() {
        let mut c = case();
        c.h_demand = 1000.0;
        c.demand_inertia_fraction = 0.02;
        let expected = 1000.0 + 0.02 * 25_000.0 * reference::DEMAND_INERTIA_CONSTANT;
        assert!((c.demand_inertia(0) - expected).abs() < 1e-9);
        assert_eq!(c.chance_in(0), None);
        c.chance = Some(ChanceLevels { sigma_ratio: 0.35, alpha: 0.99, eta: 0.95 });
        let ch = c.chance_in(0).unwrap();
        assert_eq!(ch.h_mu, expected);
        assert!((ch.sigma - 0.35 * expected).abs() < 1e-9);
        assert_eq!((ch.alpha, ch.eta), (0.99, 0.95));
    }

    #[test]
    fn min_output_depends_on_part_loading() {
        let mut u = reference::table_one_units().remove(0);
        assert_eq!(u.min_output(), u.rated_power);
        u.part_load = true;
        assert_eq!(u.min_output(), 1400.0);
        assert_eq!(u.unit_inertia(), 9000.0);
    }
}
