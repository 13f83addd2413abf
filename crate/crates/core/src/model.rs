//! Domain types shared by every module.
//!
//! Units are MW, MW·s, Hz, Hz/s and seconds throughout; nothing is normalised
//! to per-unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frequency-response product.
///
/// Delivery starts `activation_delay` seconds after the outage and ramps with
/// slope `R / ramp_duration`, so full delivery is reached at
/// [`completion_time`](FrService::completion_time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrService {
    pub id: String,
    /// Upper bound on the allocation R_s (MW).
    pub capacity_max: f64,
    /// Ramp duration T_s (s).
    pub ramp_duration: f64,
    /// Activation delay T_del,s (s).
    pub activation_delay: f64,
    /// Cost of reserving capacity (currency per MW·h).
    #[serde(default)]
    pub headroom_cost: f64,
}

impl FrService {
    pub fn new(id: impl Into<String>, capacity_max: f64, ramp_duration: f64, activation_delay: f64) -> Self {
        FrService { id: id.into(), capacity_max, ramp_duration, activation_delay, headroom_cost: 0.0 }
    }

    pub fn with_cost(mut self, headroom_cost: f64) -> Self {
        self.headroom_cost = headroom_cost;
        self
    }

    pub fn completion_time(&self) -> f64 {
        self.activation_delay + self.ramp_duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_duration > 0.0) || !self.ramp_duration.is_finite() {
            return Err(Error::NonPositiveRamp { id: self.id.clone(), value: self.ramp_duration });
        }
        if !(self.activation_delay >= 0.0) || !self.activation_delay.is_finite() {
            return Err(Error::NegativeDelay { id: self.id.clone(), value: self.activation_delay });
        }
        if !(self.capacity_max >= 0.0) || !self.capacity_max.is_finite() {
            return Err(Error::invalid(
                format!("services[{}].capacity_max", self.id),
                format!("must be finite and non-negative, got {}", self.capacity_max),
            ));
        }
        if !(self.headroom_cost >= 0.0) || !self.headroom_cost.is_finite() {
            return Err(Error::invalid(
                format!("services[{}].headroom_cost", self.id),
                format!("must be finite and non-negative, got {}", self.headroom_cost),
            ));
        }
        Ok(())
    }

    /// Fraction of the allocation delivered at time `t` (0 before activation, 1 after completion).
    pub fn delivered_fraction(&self, t: f64) -> f64 {
        ((t - self.activation_delay) / self.ramp_duration).clamp(0.0, 1.0)
    }

    /// Power delivered at `t` for an allocation of `allocation` MW.
    pub fn delivered(&self, allocation: f64, t: f64) -> f64 {
        allocation * self.delivered_fraction(t)
    }

    /// Energy delivered over `[0, t]` (MW·s), exact for the delayed ramp.
    pub fn delivered_energy(&self, allocation: f64, t: f64) -> f64 {
        let since = t - self.activation_delay;
        if since <= 0.0 {
            0.0
        } else if since <= self.ramp_duration {
            allocation * since * since / (2.0 * self.ramp_duration)
        } else {
            allocation * (since - 0.5 * self.ramp_duration)
        }
    }
}

/// A validated set of services with their allocations, sorted by completion time.
///
/// Construct through [`Portfolio::new`] (or [`validate_portfolio`]); the
/// constructor re-sorts services and rejects out-of-bounds allocations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio {
    services: Vec<FrService>,
    allocations: Vec<f64>,
}

impl Portfolio {
    pub fn new(services: Vec<FrService>, allocations: Vec<f64>) -> Result<Self> {
        if services.len() != allocations.len() {
            return Err(Error::invalid(
                "allocations",
                format!("{} allocations given for {} services", allocations.len(), services.len()),
            ));
        }
        for (service, &allocation) in services.iter().zip(&allocations) {
            service.validate()?;
            if !(allocation >= 0.0 && allocation <= service.capacity_max) {
                return Err(Error::AllocationOutOfBounds {
                    id: service.id.clone(),
                    allocation,
                    capacity: service.capacity_max,
                });
            }
        }
        let mut paired: Vec<(FrService, f64)> = services.into_iter().zip(allocations).collect();
        // stable: services with equal completion keep their input order
        paired.sort_by(|a, b| a.0.completion_time().total_cmp(&b.0.completion_time()));
        let (services, allocations) = paired.into_iter().unzip();
        Ok(Portfolio { services, allocations })
    }

    /// Portfolio with every allocation at zero; handy for timing-only analysis.
    pub fn unallocated(services: Vec<FrService>) -> Result<Self> {
        let n = services.len();
        Portfolio::new(services, vec![0.0; n])
    }

    pub fn services(&self) -> &[FrService] {
        &self.services
    }

    pub fn allocations(&self) -> &[f64] {
        &self.allocations
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FrService, f64)> {
        self.services.iter().zip(self.allocations.iter().copied())
    }

    pub fn total_allocation(&self) -> f64 {
        self.allocations.iter().sum()
    }

    /// Same services, new allocations (given in this portfolio's sorted order).
    pub fn with_allocations(&self, allocations: Vec<f64>) -> Result<Self> {
        Portfolio::new(self.services.clone(), allocations)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.services.iter().position(|s| s.id == id)
    }
}

/// Re-validates a portfolio; idempotent.
pub fn validate_portfolio(portfolio: Portfolio) -> Result<Portfolio> {
    let Portfolio { services, allocations } = portfolio;
    Portfolio::new(services, allocations)
}

/// The operating point whose frequency security is assessed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSnapshot {
    /// Inertia of committed generation H (MW·s).
    pub h_gen: f64,
    /// Demand-side inertia H_D used in deterministic evaluation (MW·s).
    pub h_demand: f64,
    /// Largest infeed loss P_L (MW).
    pub p_loss: f64,
    pub portfolio: Portfolio,
}

impl SystemSnapshot {
    pub fn new(h_gen: f64, h_demand: f64, p_loss: f64, portfolio: Portfolio) -> Result<Self> {
        for (name, value) in [("h_gen", h_gen), ("h_demand", h_demand), ("p_loss", p_loss)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::invalid(
                    format!("snapshot.{name}"),
                    format!("must be finite and non-negative, got {value}"),
                ));
            }
        }
        Ok(SystemSnapshot { h_gen, h_demand, p_loss, portfolio })
    }

    pub fn total_inertia(&self) -> f64 {
        self.h_gen + self.h_demand
    }
}

/// Frequency-security requirement envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecuritySpec {
    /// Nominal frequency f0 (Hz).
    #[serde(rename = "f0")]
    pub f_nominal: f64,
    /// Admissible deviation at the nadir (Hz).
    pub delta_f_max: f64,
    /// Admissible initial RoCoF (Hz/s).
    pub rocof_max: f64,
    /// Upper bound on the largest loss (MW).
    pub p_loss_max: f64,
}

impl SecuritySpec {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("f0", self.f_nominal),
            ("delta_f_max", self.delta_f_max),
            ("rocof_max", self.rocof_max),
            ("p_loss_max", self.p_loss_max),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(
                    format!("spec.{name}"),
                    format!("must be finite and strictly positive, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// GB-style requirements: 50 Hz, 0.8 Hz nadir, 0.5 Hz/s RoCoF, 1.8 GW loss.
    pub fn great_britain() -> Self {
        SecuritySpec { f_nominal: 50.0, delta_f_max: 0.8, rocof_max: 0.5, p_loss_max: 1800.0 }
    }
}

/// Gaussian demand-side inertia H_D ~ N(h_mu, sigma²) with per-constraint confidence levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceSpec {
    pub h_mu: f64,
    pub sigma: f64,
    /// Confidence for the nadir constraint.
    pub alpha: f64,
    /// Confidence for the RoCoF constraint.
    pub eta: f64,
}

impl ChanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_mu >= 0.0) || !self.h_mu.is_finite() {
            return Err(Error::invalid(
                "chance.h_mu",
                format!("must be finite and non-negative, got {}", self.h_mu),
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(
                "chance.sigma",
                format!("must be finite and non-negative, got {}", self.sigma),
            ));
        }
        for p in [self.alpha, self.eta] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::ProbabilityOutOfRange(p));
            }
        }
        Ok(())
    }
}

/// Outcome of a frequency-security assessment.
///
/// Nadir fields are `None` when the steady-state condition fails (frequency
/// never recovers) or the effective inertia is not positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    /// Magnitude of the initial RoCoF with the inertia used for the RoCoF check
    /// (Hz/s); `None` when that inertia is not positive.
    pub rocof_value: Option<f64>,
    /// Inertia margin of the RoCoF constraint (MW·s).
    pub rocof_margin: f64,
    pub rocof_ok: bool,
    /// Total FR minus the loss (MW).
    pub steady_state_margin: f64,
    pub steady_state_ok: bool,
    pub nadir_time: Option<f64>,
    pub nadir_depth: Option<f64>,
    pub nadir_interval: Option<usize>,
    pub nadir_ok: bool,
    /// LHS − RHS of the active nadir cone (MW²·s/Hz).
    pub soc_slack: Option<f64>,
    /// `soc_slack` relative to the cone's right-hand side.
    pub soc_slack_ratio: Option<f64>,
}

impl SecurityReport {
    pub fn is_secure(&self) -> bool {
        self.rocof_ok && self.steady_state_ok && self.nadir_ok
    }

    /// Names of the violated requirements, in a fixed order.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.rocof_ok {
            out.push("rocof");
        }
        if !self.steady_state_ok {
            out.push("steady-state");
        }
        if !self.nadir_ok {
            out.push("nadir");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn sorts_by_completion_time() {
        let p = Portfolio::new(reference::validation_services(), vec![200.0, 980.0, 500.0, 600.0]).unwrap();
        let order: Vec<f64> = p.services().iter().map(FrService::completion_time).collect();
        assert_eq!(order, vec![3.0, 5.5, 9.0, 10.0]);
        let ids: Vec<&str> = p.services().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["FR1", "FR3", "FR4", "FR2"]);
        assert_eq!(p.allocations(), &[200.0, 500.0, 600.0, 980.0]);
    }

    #[test]
    fn singleton_order() {
        let p = Portfolio::new(vec![FrService::new("PFR", 100.0, 10.0, 0.0)], vec![50.0]).unwrap();
        assert_eq!(p.services()[0].completion_time(), 10.0);
    }

    #[test]
    fn rejects_zero_ramp() {
        let err = Portfolio::new(vec![FrService::new("bad", 10.0, 0.0, 0.0)], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveRamp { .. }));
    }

    #[test]
    fn rejects_negative_delay() {
        let err = Portfolio::new(vec![FrService::new("bad", 10.0, 1.0, -0.1)], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::NegativeDelay { .. }));
    }

    #[test]
    fn rejects_allocation_out_of_bounds_without_clipping() {
        let err = Portfolio::new(vec![FrService::new("a", 10.0, 1.0, 0.0)], vec![10.5]).unwrap_err();
        assert!(matches!(err, Error::AllocationOutOfBounds { .. }));
        let err = Portfolio::new(vec![FrService::new("a", 10.0, 1.0, 0.0)], vec![-1.0]).unwrap_err();
        assert!(matches!(err, Error::AllocationOutOfBounds { .. }));
    }

    #[test]
    fn validation_is_idempotent_with_ties() {
        let services = vec![
            FrService::new("b", 10.0, 2.0, 1.0),
            FrService::new("a", 10.0, 3.0, 0.0),
            FrService::new("c", 10.0, 1.0, 0.0),
        ];
        let p = Portfolio::new(services, vec![1.0, 2.0, 3.0]).unwrap();
        let again = validate_portfolio(p.clone()).unwrap();
        assert_eq!(p, again);
        // b and a both complete at 3 s; input order preserved
        let ids: Vec<&str> = p.services().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "b", "a"]);
    }

    #[test]
    fn delivered_energy_matches_ramp_integral() {
        let s = FrService::new("x", 100.0, 4.0, 1.0);
        assert_eq!(s.delivered_energy(100.0, 1.0), 0.0);
        assert!((s.delivered_energy(100.0, 3.0) - 0.5 * 50.0 * 2.0).abs() < 1e-12);
        assert!((s.delivered_energy(100.0, 7.0) - (200.0 + 200.0)).abs() < 1e-12);
    }

    #[test]
    fn spec_and_chance_validation() {
        assert!(SecuritySpec::great_britain().validate().is_ok());
        let mut spec = SecuritySpec::great_britain();
        spec.rocof_max = 0.0;
        assert!(spec.validate().is_err());
        let chance = ChanceSpec { h_mu: 1.0, sigma: 0.1, alpha: 1.0, eta: 0.5 };
        assert_eq!(chance.validate(), Err(Error::ProbabilityOutOfRange(1.0)));
    }
}
