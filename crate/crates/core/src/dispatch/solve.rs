//! Solving a dispatch case and turning the solver point into a [`Schedule`].

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::formulation::{formulate, Formulation, Requirements};
use super::model::{ClassDispatch, DispatchCase, PeriodSchedule, Schedule, ServiceAllocation};
use crate::conic::{solve_by_enumeration_mi, solve_mi_with, MiOptions, SolveResult, DEFAULT_GAP};
use crate::error::{Error, Result};
use crate::model::{Portfolio, SystemSnapshot};
use crate::security::assess_with_tolerance;

/// Relative tolerance of the independent per-period assessment; matches the
/// accuracy the interior-point solver delivers.
pub const SCHEDULE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Branch-and-bound over every integer, segments gated by big-M.
    #[default]
    Mi,
    /// One branch-and-bound per segment hypothesis, unselected segments removed.
    Enum,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mi" => Ok(Method::Mi),
            "enum" => Ok(Method::Enum),
            other => Err(Error::invalid("method", format!("expected `mi` or `enum`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub gap: f64,
    pub method: Method,
    /// Impose the frequency-security constraints (off gives the unsecured cost).
    pub secure: bool,
    pub node_limit: usize,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            gap: DEFAULT_GAP,
            method: Method::Mi,
            secure: true,
            node_limit: MiOptions::default().node_limit,
        }
    }
}

pub fn solve_dispatch(case: &DispatchCase, gap: f64) -> Result<Schedule> {
    solve_dispatch_with(case, &DispatchOptions { gap, ..DispatchOptions::default() })
}

pub fn solve_dispatch_with(case: &DispatchCase, opts: &DispatchOptions) -> Result<Schedule> {
    case.validate()?;
    if case.fr_catalog.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    for t in 0..case.periods {
        let capacity: f64 =
            case.units.iter().map(|u| u.count as f64 * u.rated_power).sum::<f64>() + case.wind(t);
        if case.demand[t] > capacity {
            return Err(Error::Infeasible(format!(
                "power balance in period {t}: demand {} MW exceeds available capacity {capacity} MW",
                case.demand[t]
            )));
        }
    }
    let level = if opts.secure { Requirements::Full } else { Requirements::Balance };
    let form = formulate(case, level)?;
    let result = run(&form, opts)?;
    if !result.is_feasible() {
        return Err(Error::Infeasible(diagnose(case, opts, level)?));
    }
    let schedule = extract(case, &form, &result)?;
    if opts.secure {
        if let Some((t, p)) = schedule.periods.iter().enumerate().find(|(_, p)| !p.security.is_secure()) {
            return Err(Error::NumericalFailure {
                reason: format!(
                    "schedule fails the independent assessment in period {t}: {}",
                    p.security.violations().join(", ")
                ),
                trace: String::new(),
            });
        }
    }
    Ok(schedule)
}

fn run(form: &Formulation, opts: &DispatchOptions) -> Result<SolveResult> {
    let mi = MiOptions { gap: opts.gap, node_limit: opts.node_limit, ..MiOptions::default() };
    match opts.method {
        Method::Mi => Ok(solve_mi_with(&form.program, &mi)?.0),
        Method::Enum => solve_by_enumeration_mi(&form.program, &mi),
    }
}

/// Names the first requirement, in order of increasing strength, that
/// cannot be met.
fn diagnose(case: &DispatchCase, opts: &DispatchOptions, upto: Requirements) -> Result<String> {
    let probe = DispatchOptions { gap: 0.5, method: Method::Mi, ..*opts };
    for (level, name) in [
        (Requirements::Balance, "power balance within unit limits"),
        (Requirements::Rocof, "rocof"),
        (Requirements::SteadyState, "steady-state"),
    ] {
        if level > upto {
            break;
        }
        if !run(&formulate(case, level)?, &probe)?.is_feasible() {
            return Ok(format!("`{name}` cannot be met"));
        }
    }
    Ok("`nadir` cannot be met".into())
}

struct GroupState {
    n: f64,
    p: f64,
    r: f64,
}

fn extract(case: &DispatchCase, form: &Formulation, result: &SolveResult) -> Result<Schedule> {
    let x = &result.values;
    let mut periods = Vec::with_capacity(case.periods);
    let mut previous: Option<Vec<f64>> = None;
    for (t, pv) in form.periods.iter().enumerate() {
        let mut state: Vec<GroupState> = form
            .groups
            .iter()
            .zip(&pv.groups)
            .map(|(g, gv)| {
                let u = &case.units[g.class];
                let n = x[gv.n].round().clamp(0.0, g.count as f64);
                let p = x[gv.p].clamp(u.min_output() * n, u.rated_power * n);
                let r_max = (u.max_fr_deliverable * n).min(u.rated_power * n - p);
                let r = gv.r.map_or(0.0, |r| x[r].clamp(0.0, r_max.max(0.0)));
                GroupState { n, p, r }
            })
            .collect();

        // close the power balance exactly: wind first, then unit output
        let avail = case.wind(t);
        let mut wind = x[pv.wind].clamp(0.0, avail);
        let mut excess = case.demand[t] - wind - state.iter().map(|s| s.p).sum::<f64>();
        let w = (wind + excess).clamp(0.0, avail);
        excess -= w - wind;
        wind = w;
        for (g, s) in form.groups.iter().zip(state.iter_mut()) {
            let u = &case.units[g.class];
            let room = if excess > 0.0 {
                (u.rated_power * s.n - s.p - s.r).max(0.0)
            } else {
                (s.p - u.min_output() * s.n).max(0.0)
            };
            let step = excess.abs().min(room).copysign(excess);
            s.p += step;
            excess -= step;
        }

        let mut allocations = Vec::with_capacity(case.fr_catalog.len());
        for (s, xv) in case.fr_catalog.iter().zip(&pv.external) {
            let headroom: f64 = form
                .groups
                .iter()
                .zip(&state)
                .filter(|(g, _)| case.units[g.class].fr_service_id.as_deref() == Some(&s.id))
                .map(|(_, st)| st.r)
                .sum();
            let ext = xv.map_or(0.0, |v| x[v].clamp(0.0, case.external(&s.id)));
            allocations.push((headroom + ext).clamp(0.0, s.capacity_max));
        }

        let h_gen: f64 =
            form.groups.iter().zip(&state).map(|(g, s)| s.n * case.units[g.class].unit_inertia()).sum();
        let p_loss = form
            .groups
            .iter()
            .zip(&state)
            .map(|(g, s)| match (g.count, s.n > 0.0) {
                (_, false) => 0.0,
                (1, true) => s.p,
                (_, true) => case.units[g.class].rated_power,
            })
            .fold(0.0, f64::max);

        let counts: Vec<f64> = state.iter().map(|s| s.n).collect();
        let startups: Vec<f64> = match &previous {
            Some(prev) => counts.iter().zip(prev).map(|(n, m)| (n - m).max(0.0)).collect(),
            None => vec![0.0; counts.len()],
        };

        let mut cost = 0.0;
        let mut units: Vec<ClassDispatch> = case
            .units
            .iter()
            .map(|u| ClassDispatch {
                class: u.class.clone(),
                committed: 0,
                output: 0.0,
                fr: 0.0,
                startups: 0,
            })
            .collect();
        for ((g, s), &st) in form.groups.iter().zip(&state).zip(&startups) {
            let u = &case.units[g.class];
            cost += u.no_load_cost * s.n + u.marginal_cost * s.p + u.startup_cost * st;
            let c = &mut units[g.class];
            c.committed += s.n as u32;
            c.output += s.p;
            c.fr += s.r;
            c.startups += st as u32;
        }
        for (s, mw) in case.fr_catalog.iter().zip(&allocations) {
            cost += s.headroom_cost * mw;
        }

        let h_demand = case.demand_inertia(t);
        let portfolio = Portfolio::new(case.fr_catalog.clone(), allocations.clone())?;
        let snapshot = SystemSnapshot::new(h_gen, h_demand, p_loss, portfolio)?;
        let security =
            assess_with_tolerance(&snapshot, &case.spec, case.chance_in(t).as_ref(), SCHEDULE_TOL)?;

        periods.push(PeriodSchedule {
            demand: case.demand[t],
            wind_used: wind,
            curtailment: avail - wind,
            units,
            fr: case
                .fr_catalog
                .iter()
                .zip(&allocations)
                .map(|(s, &mw)| ServiceAllocation { id: s.id.clone(), mw })
                .collect(),
            h_gen,
            h_demand,
            p_loss,
            cost,
            security,
        });
        previous = Some(counts);
    }
    let total_cost: f64 = periods.iter().map(|p| p.cost).sum();
    Ok(Schedule {
        status: result.status,
        total_cost,
        bound: result.bound.min(total_cost),
        gap: result.duality_gap,
        node_count: result.node_count,
        periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::model::ChanceLevels;
    use crate::reference;

    fn ccgt_only(demand: f64) -> DispatchCase {
        let mut case = reference::gb_dispatch_case(demand, 0.0);
        case.units.retain(|u| u.class == "ccgt");
        case
    }

    /// Balance, headroom and largest-loss bookkeeping of a schedule.
    fn check_schedule(case: &DispatchCase, s: &Schedule) {
        for (t, p) in s.periods.iter().enumerate() {
            let generation: f64 = p.units.iter().map(|u| u.output).sum();
            assert!((generation + p.wind_used - case.demand[t]).abs() <= 1e-6, "period {t} balance");
            assert!((p.curtailment - (case.wind(t) - p.wind_used)).abs() < 1e-9);
            let mut largest: f64 = 0.0;
            for (u, d) in case.units.iter().zip(&p.units) {
                let n = d.committed as f64;
                assert!(d.output >= u.min_output() * n - 1e-9);
                assert!(d.output + d.fr <= u.rated_power * n + 1e-9);
                assert!(d.fr <= u.max_fr_deliverable * n + 1e-9);
                if d.committed > 0 {
                    let infeed = if u.individual { d.output / n } else { u.rated_power };
                    assert!(p.p_loss >= infeed - 1e-9);
                    largest = largest.max(infeed);
                }
            }
            if case.units.iter().all(|u| !u.individual) {
                assert_eq!(p.p_loss, largest);
            }
            let h: f64 =
                case.units.iter().zip(&p.units).map(|(u, d)| d.committed as f64 * u.unit_inertia()).sum();
            assert!((p.h_gen - h).abs() <= 1e-9 * h.max(1.0));
        }
    }

    #[test]
    fn all_ccgt_commits_enough_units() {
        let case = ccgt_only(20_000.0);
        let s = solve_dispatch(&case, DEFAULT_GAP).unwrap();
        assert!(s.periods[0].units[0].committed >= 40);
        assert_eq!(s.periods[0].p_loss, 500.0);
        assert!(s.is_secure());
        check_schedule(&case, &s);
    }

    #[test]
    fn gb_case_is_secure_and_consistent() {
        let case = reference::gb_dispatch_case(25_000.0, 6_000.0);
        let s = solve_dispatch(&case, DEFAULT_GAP).unwrap();
        check_schedule(&case, &s);
        let p = &s.periods[0];
        let portfolio = Portfolio::new(case.fr_catalog.clone(), p.fr.iter().map(|a| a.mw).collect()).unwrap();
        let snap = SystemSnapshot::new(p.h_gen, p.h_demand, p.p_loss, portfolio).unwrap();
        assert!(crate::security::assess(&snap, &case.spec, None).unwrap().is_secure());
        assert!(s.bound <= s.total_cost);
        assert!(s.gap <= DEFAULT_GAP + 1e-12);
    }

    #[test]
    fn frequency_services_have_non_negative_cost() {
        let case = reference::gb_dispatch_case(25_000.0, 6_000.0);
        let opts = DispatchOptions { gap: 1e-4, ..DispatchOptions::default() };
        let secured = solve_dispatch_with(&case, &opts).unwrap();
        let free = solve_dispatch_with(&case, &DispatchOptions { secure: false, ..opts }).unwrap();
        assert!(free.total_cost <= secured.total_cost + 1e-6);
        // the unconstrained optimum keeps the cheap nuclear fleet at full output
        assert!(secured.bound <= secured.total_cost);
    }

    #[test]
    fn tighter_loss_limit_never_helps() {
        let mut case = reference::gb_dispatch_case(25_000.0, 6_000.0);
        case.units[0].part_load = true;
        let opts = DispatchOptions { gap: 1e-4, ..DispatchOptions::default() };
        let wide = solve_dispatch_with(&case, &opts).unwrap();
        case.spec.p_loss_max = 1500.0;
        let tight = solve_dispatch_with(&case, &opts).unwrap();
        assert!(tight.total_cost >= wide.bound - 1e-6);
        assert!(tight.periods[0].p_loss <= 1500.0);
        check_schedule(&case, &tight);
    }

    #[test]
    fn uncertainty_costs_money() {
        let mut case = reference::gb_dispatch_case(30_000.0, 10_000.0);
        case.demand_inertia_fraction = 0.1;
        let opts = DispatchOptions { gap: 1e-4, ..DispatchOptions::default() };
        let solve = |ratio: f64| {
            let mut c = case.clone();
            c.chance = Some(ChanceLevels { sigma_ratio: ratio, alpha: 0.99, eta: 0.99 });
            solve_dispatch_with(&c, &opts).unwrap()
        };
        let certain = solve(0.0);
        let uncertain = solve(0.35);
        assert!(uncertain.total_cost >= certain.bound - 1e-6);
        assert!(uncertain.is_secure());
    }

    #[test]
    fn methods_agree() {
        let case = reference::gb_dispatch_case(22_000.0, 9_000.0);
        let mi = solve_dispatch(&case, DEFAULT_GAP).unwrap();
        let en = solve_dispatch_with(
            &case,
            &DispatchOptions { method: Method::Enum, ..DispatchOptions::default() },
        )
        .unwrap();
        let tol = DEFAULT_GAP * mi.total_cost.max(en.total_cost);
        assert!((mi.total_cost - en.total_cost).abs() <= tol, "{} vs {}", mi.total_cost, en.total_cost);
        check_schedule(&case, &en);
    }

    #[test]
    fn infeasibility_names_the_requirement() {
        let err = solve_dispatch(&ccgt_only(60_000.0), DEFAULT_GAP).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("power balance")), "{err}");

        // no FR product reachable: steady state fails first
        let mut case = ccgt_only(20_000.0);
        case.units[0].fr_service_id = None;
        let err = solve_dispatch(&case, DEFAULT_GAP).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("steady-state")), "{err}");

        // a RoCoF limit no fleet can meet
        let mut case = ccgt_only(20_000.0);
        case.spec.rocof_max = 0.01;
        let err = solve_dispatch(&case, DEFAULT_GAP).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("rocof")), "{err}");

        // fleet fine for RoCoF and steady state but only slow FR
        let mut case = ccgt_only(20_000.0);
        case.fr_catalog[1].ramp_duration = 60.0;
        case.spec.delta_f_max = 0.05;
        let err = solve_dispatch(&case, DEFAULT_GAP).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(m) if m.contains("nadir")), "{err}");
    }

    #[test]
    fn method_parsing() {
        assert_eq!("mi".parse::<Method>().unwrap(), Method::Mi);
        assert_eq!("enum".parse::<Method>().unwrap(), Method::Enum);
        assert!("simplex".parse::<Method>().is_err());
    }

    #[test]
    fn multi_period_respects_min_up() {
        let mut case = ccgt_only(10_000.0);
        case.periods = 4;
        case.demand = vec![10_000.0, 30_000.0, 10_000.0, 10_000.0];
        case.wind_available = vec![0.0; 4];
        case.units[0].min_up_periods = 3;
        case.units[0].startup_cost = 50_000.0;
        let s = solve_dispatch(&case, DEFAULT_GAP).unwrap();
        check_schedule(&case, &s);
        let n: Vec<u32> = s.periods.iter().map(|p| p.units[0].committed).collect();
        // units are interchangeable: at least as many as started within the
        // last three periods must be on
        for t in 1..4usize {
            let starts = &s.periods[t.saturating_sub(2).max(1)..=t];
            let recent: u32 = starts.iter().map(|p| p.units[0].startups).sum();
            assert!(n[t] >= recent, "{n:?}");
            assert_eq!(s.periods[t].units[0].startups, n[t].saturating_sub(n[t - 1]));
        }
        assert!(n[1] >= 60);
        let expected: f64 = s.periods[1..].iter().map(|p| p.units[0].startups as f64 * 50_000.0).sum();
        let startup_part = s.total_cost
            - s.periods
                .iter()
                .map(|p| {
                    let u = &case.units[0];
                    u.no_load_cost * p.units[0].committed as f64 + u.marginal_cost * p.units[0].output
                })
                .sum::<f64>();
        assert!((startup_part - expected).abs() < 1e-6);
    }
}
