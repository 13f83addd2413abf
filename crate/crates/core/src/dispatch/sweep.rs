//! One-parameter studies: re-solve a case along a named axis.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{DispatchCase, GenUnit};
use super::solve::{solve_dispatch_with, DispatchOptions};
use crate::conic::SolveStatus;
use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FREQSEC_THREADS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Activation delay (s) of one catalog service.
    Delay {
        service: String,
    },
    /// Share of a class's units that offer `service` instead of the class's
    /// own product; the offering units become a class of their own.
    ProviderFraction {
        class: String,
        service: String,
    },
    /// σ as a share of the demand inertia forecast.
    Sigma,
    /// Multiplier on the available wind.
    WindScale,
    DemandInertiaFraction,
}

impl FromStr for SweepAxis {
    type Err = Error;

    /// `delay:<service>`, `provider_fraction:<class>:<service>`, `sigma`,
    /// `wind_scale` or `demand_inertia_fraction`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["delay", service] => Ok(SweepAxis::Delay { service: service.to_string() }),
            ["provider_fraction", class, service] => {
                Ok(SweepAxis::ProviderFraction { class: class.to_string(), service: service.to_string() })
            }
            ["sigma"] => Ok(SweepAxis::Sigma),
            ["wind_scale"] => Ok(SweepAxis::WindScale),
            ["demand_inertia_fraction"] => Ok(SweepAxis::DemandInertiaFraction),
            _ => Err(Error::invalid(
                "axis",
                format!(
                    "`{s}` is not one of delay:<service>, provider_fraction:<class>:<service>, \
                     sigma, wind_scale, demand_inertia_fraction"
                ),
            )),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::Delay { service } => write!(f, "delay:{service}"),
            SweepAxis::ProviderFraction { class, service } => {
                write!(f, "provider_fraction:{class}:{service}")
            }
            SweepAxis::Sigma => f.write_str("sigma"),
            SweepAxis::WindScale => f.write_str("wind_scale"),
            SweepAxis::DemandInertiaFraction => f.write_str("demand_inertia_fraction"),
        }
    }
}

/// Direction in which the optimal cost must move as the axis value grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

impl SweepAxis {
    /// Every axis either shrinks or enlarges the feasible set as it grows.
    pub fn expected(&self) -> Direction {
        match self {
            SweepAxis::Delay { .. } | SweepAxis::Sigma => Direction::NonDecreasing,
            SweepAxis::ProviderFraction { .. } | SweepAxis::WindScale | SweepAxis::DemandInertiaFraction => {
                Direction::NonIncreasing
            }
        }
    }

    /// The case at axis value `value`.
    pub fn apply(&self, case: &DispatchCase, value: f64) -> Result<DispatchCase> {
        if !value.is_finite() {
            return Err(Error::invalid("values", format!("{value} is not finite")));
        }
        let mut out = case.clone();
        match self {
            SweepAxis::Delay { service } => {
                let s = out
                    .fr_catalog
                    .iter_mut()
                    .find(|s| s.id == *service)
                    .ok_or_else(|| unknown("service", service))?;
                s.activation_delay = value;
            }
            SweepAxis::ProviderFraction { class, service } => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::invalid(
                        "values",
                        format!("provider fraction {value} outside [0, 1]"),
                    ));
                }
                if !out.fr_catalog.iter().any(|s| s.id == *service) {
                    return Err(unknown("service", service));
                }
                let pos = out
                    .units
                    .iter()
                    .position(|u| u.class == *class)
                    .ok_or_else(|| unknown("class", class))?;
                let base = out.units[pos].clone();
                let offering = (value * base.count as f64).round() as u32;
                out.units[pos].count = base.count - offering;
                out.units.insert(
                    pos + 1,
                    GenUnit {
                        class: format!("{class}:{service}"),
                        count: offering,
                        fr_service_id: Some(service.clone()),
                        ..base
                    },
                );
            }
            SweepAxis::Sigma => {
                let c = out
                    .chance
                    .as_mut()
                    .ok_or_else(|| Error::invalid("axis", "sigma sweeps need `chance` in the case"))?;
                c.sigma_ratio = value;
            }
            SweepAxis::WindScale => {
                for w in &mut out.wind_available {
                    *w *= value;
                }
            }
            SweepAxis::DemandInertiaFraction => out.demand_inertia_fraction = value,
        }
        out.validate()?;
        Ok(out)
    }
}

fn unknown(what: &str, name: &str) -> Error {
    Error::invalid("axis", format!("unknown {what} `{name}`"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// `None` when infeasible.
    pub status: Option<SolveStatus>,
    pub cost: f64,
    pub bound: f64,
    /// Total curtailed wind (MWh).
    pub curtailment: f64,
    /// Smallest margins over the periods.
    pub rocof_margin: f64,
    pub steady_state_margin: f64,
    pub soc_slack_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub expected: Direction,
    /// Whether the solved costs are consistent with `expected`. The optimum
    /// at each point is only known to lie in `[bound, cost]`, so a step is
    /// flagged only when even those intervals cannot be ordered.
    pub monotone: bool,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record([
            "value",
            "status",
            "cost",
            "bound",
            "curtailment",
            "rocof_margin",
            "steady_state_margin",
            "soc_slack_ratio",
        ])
        .map_err(io)?;
        for p in &self.points {
            let status = match p.status {
                Some(SolveStatus::Optimal) => "optimal",
                Some(SolveStatus::GapReached) => "gap_reached",
                Some(SolveStatus::Infeasible) | None => "infeasible",
            };
            w.write_record([
                p.value.to_string(),
                status.to_string(),
                p.cost.to_string(),
                p.bound.to_string(),
                p.curtailment.to_string(),
                p.rocof_margin.to_string(),
                p.steady_state_margin.to_string(),
                p.soc_slack_ratio.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

fn solve_point(
    case: &DispatchCase,
    axis: &SweepAxis,
    value: f64,
    opts: &DispatchOptions,
) -> Result<SweepPoint> {
    let case = axis.apply(case, value)?;
    match solve_dispatch_with(&case, opts) {
        Ok(s) => {
            let fold = |f: &dyn Fn(&super::PeriodSchedule) -> f64| {
                s.periods.iter().map(f).fold(f64::INFINITY, f64::min)
            };
            Ok(SweepPoint {
                value,
                status: Some(s.status),
                cost: s.total_cost,
                bound: s.bound,
                curtailment: s.total_curtailment(),
                rocof_margin: fold(&|p| p.security.rocof_margin),
                steady_state_margin: fold(&|p| p.security.steady_state_margin),
                soc_slack_ratio: fold(&|p| p.security.soc_slack_ratio.unwrap_or(f64::NAN)),
            })
        }
        Err(Error::Infeasible(_)) => Ok(SweepPoint {
            value,
            status: None,
            cost: f64::INFINITY,
            bound: f64::INFINITY,
            curtailment: f64::NAN,
            rocof_margin: f64::NAN,
            steady_state_margin: f64::NAN,
            soc_slack_ratio: f64::NAN,
        }),
        Err(e) => Err(e),
    }
}

/// Solves `case` at every value of `axis`, concurrently, in input order.
pub fn sweep(
    case: &DispatchCase,
    axis: &SweepAxis,
    values: &[f64],
    opts: &DispatchOptions,
) -> Result<SweepResult> {
    let work = || -> Result<Vec<SweepPoint>> {
        values.par_iter().map(|&v| solve_point(case, axis, v, opts)).collect()
    };
    let points = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(THREADS_ENV, e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let expected = axis.expected();
    Ok(SweepResult { axis: axis.clone(), expected, monotone: is_consistent(&points, expected), points })
}

/// Points are ordered by value; checks that each step can move in the
/// expected direction given the proven bounds.
fn is_consistent(points: &[SweepPoint], dir: Direction) -> bool {
    let mut order: Vec<&SweepPoint> = points.iter().collect();
    order.sort_by(|a, b| a.value.total_cmp(&b.value));
    order.windows(2).all(|w| {
        let (a, b) = match dir {
            Direction::NonDecreasing => (w[0], w[1]),
            Direction::NonIncreasing => (w[1], w[0]),
        };
        // need cost(b) ≥ cost(a) for some optima in [bound, cost]
        if a.bound.is_infinite() {
            return b.cost.is_infinite();
        }
        b.cost >= a.bound - 1e-9 * a.bound.abs().max(1.0)
    })
}
