//! Frequency-security constraints as a mixed-integer rotated-SOC block.
//!
//! For each segment `(a, b]` of the timing decomposition the block holds an
//! entry row `FR(a) ≤ P_L`, an exit row `P_L ≤ FR(b)` and the nadir cone
//! `(H/f0 + H_D/f0 + y1)·y2 ≥ y3²`, all gated by a selector binary; exactly
//! one selector is active. RoCoF and steady-state rows are ungated.

use serde::{Deserialize, Serialize};

use super::program::{ConicProgram, LinExpr, LinkTarget, VarKind};
use crate::dynamics::{self, IntervalDecomposition};
use crate::error::{Error, Result};
use crate::model::{ChanceSpec, FrService, Portfolio, SecurityReport, SecuritySpec, SystemSnapshot};
use crate::security::{assess_with_tolerance, normal_inv_cdf};

/// Stand-alone frequency-security scheduling problem over H, P_L and R_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProblem {
    pub services: Vec<FrService>,
    pub spec: SecuritySpec,
    #[serde(default)]
    pub chance: Option<ChanceSpec>,
    /// Deterministic demand inertia used when `chance` is absent (MW·s).
    #[serde(default)]
    pub h_demand: f64,
    /// Bounds on generator inertia H (MW·s).
    pub inertia: (f64, f64),
    /// Bounds on the largest loss P_L (MW); the upper bound is capped at `spec.p_loss_max`.
    pub p_loss: (f64, f64),
    /// Cost per MW·s of inertia.
    #[serde(default)]
    pub inertia_cost: f64,
    /// Cost per MW of largest loss (negative values reward larger losses).
    #[serde(default)]
    pub p_loss_cost: f64,
}

/// Indices of the frequency-security variables and rows inside a program.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBlock {
    pub h: usize,
    pub p_loss: usize,
    /// Allocation variables, in `services` order.
    pub r: Vec<usize>,
    /// Services sorted by completion time.
    pub services: Vec<FrService>,
    /// Timing-only decomposition (segments are independent of allocations).
    pub decomposition: IntervalDecomposition,
    /// One selector per segment.
    pub selectors: Vec<usize>,
    pub rocof_row: usize,
    pub steady_state_row: usize,
    /// Demand inertia credited in the RoCoF and nadir constraints.
    pub h_demand_rocof: f64,
    pub h_demand_nadir: f64,
    pub spec: SecuritySpec,
    pub chance: Option<ChanceSpec>,
    /// Deterministic demand inertia (ignored when `chance` is set).
    pub h_demand: f64,
}

/// Effective demand inertia at confidence `p` (or the deterministic value).
fn demand_inertia(chance: Option<&ChanceSpec>, h_demand: f64, p: impl Fn(&ChanceSpec) -> f64) -> Result<f64> {
    match chance {
        None => Ok(h_demand),
        Some(c) => Ok(c.h_mu - normal_inv_cdf(p(c))? * c.sigma),
    }
}

fn finite_bounds(program: &ConicProgram, var: usize) -> Result<()> {
    let v = &program.variables[var];
    if v.lo.is_finite() && v.hi.is_finite() {
        Ok(())
    } else {
        Err(Error::UnboundedBigM { variable: v.name.clone() })
    }
}

/// Adds the frequency-security block over existing variables `h`, `p_loss`
/// and `r` (one per service, same order as `services`). Every variable the
/// block touches needs finite bounds so each big-M can be derived.
#[allow(clippy::too_many_arguments)]
pub fn add_frequency_constraints(
    program: &mut ConicProgram,
    label: &str,
    services: &[FrService],
    h: usize,
    p_loss: usize,
    r: &[usize],
    spec: &SecuritySpec,
    chance: Option<&ChanceSpec>,
    h_demand: f64,
) -> Result<FrequencyBlock> {
    spec.validate()?;
    if let Some(c) = chance {
        c.validate()?;
    }
    if services.len() != r.len() {
        return Err(Error::invalid("r", "one allocation variable per service expected"));
    }
    for &v in [h, p_loss].iter().chain(r) {
        finite_bounds(program, v)?;
    }
    // sort the (service, variable) pairs the same way a portfolio does
    let mut order: Vec<usize> = (0..services.len()).collect();
    order.sort_by(|&a, &b| services[a].completion_time().total_cmp(&services[b].completion_time()));
    let services: Vec<FrService> = order.iter().map(|&i| services[i].clone()).collect();
    let r: Vec<usize> = order.iter().map(|&i| r[i]).collect();
    let timing = Portfolio::unallocated(services.clone())?;
    let decomposition = dynamics::decompose(&timing)?;

    let f0 = spec.f_nominal;
    let four_df = 4.0 * spec.delta_f_max;
    let two_sqrt_df = 2.0 * spec.delta_f_max.sqrt();
    let hd_rocof = demand_inertia(chance, h_demand, |c| c.eta)?;
    let hd_nadir = demand_inertia(chance, h_demand, |c| c.alpha)?;

    // RoCoF: H + H_D ≥ P_L·f0/(2·RoCoF_max)
    let rocof_row = program.add_le(
        format!("{label}rocof"),
        LinExpr::var(p_loss).scaled(f0 / (2.0 * spec.rocof_max)).term(h, -1.0).plus(-hd_rocof),
    );
    // steady state: ΣR ≥ P_L
    let mut steady = LinExpr::var(p_loss);
    for &v in &r {
        steady.add_term(v, -1.0);
    }
    let steady_state_row = program.add_le(format!("{label}steady_state"), steady);

    let count = decomposition.len();
    let mut selectors = Vec::with_capacity(count);
    for n in 0..count {
        let lo = if count == 1 { 1.0 } else { 0.0 };
        selectors.push(program.add_var(format!("{label}z{n}"), lo, 1.0, VarKind::Binary));
    }
    let mut one = LinExpr::constant(-1.0);
    for &z in &selectors {
        one.add_term(z, 1.0);
    }
    program.add_eq(format!("{label}select_one"), one);

    for (n, iv) in decomposition.intervals.iter().enumerate() {
        let z = selectors[n];
        // entry: FR(a) ≤ P_L
        let mut entry = LinExpr::var(p_loss).scaled(-1.0);
        // exit: P_L ≤ FR(b)
        let mut exit = LinExpr::var(p_loss);
        for (s, &v) in services.iter().zip(&r) {
            entry.add_term(v, s.delivered_fraction(iv.start));
            exit.add_term(v, -s.delivered_fraction(iv.end));
        }
        for (name, expr) in [("entry", entry), ("exit", exit)] {
            let big_m = expr.range(&program.variables).1.max(0.0);
            let row = program.add_le(format!("{label}{name}{n}"), expr);
            program.add_link(z, LinkTarget::Row(row), big_m);
        }

        // nadir cone
        let mut u = LinExpr::var(h).scaled(1.0 / f0).plus(hd_nadir / f0);
        let mut v = LinExpr::new();
        let mut w = LinExpr::var(p_loss).scaled(1.0 / two_sqrt_df);
        for &k in &iv.delivered {
            let s = &services[k];
            u.add_term(r[k], -(s.ramp_duration + 2.0 * s.activation_delay) / four_df);
            w.add_term(r[k], -1.0 / two_sqrt_df);
        }
        for &l in &iv.ramping {
            let s = &services[l];
            let (t, d) = (s.ramp_duration, s.activation_delay);
            u.add_term(r[l], d * d / t / four_df);
            v.add_term(r[l], 1.0 / t);
            w.add_term(r[l], d / t / two_sqrt_df);
        }
        let (u_min, _) = u.range(&program.variables);
        let (_, v_max) = v.range(&program.variables);
        let (w_lo, w_hi) = w.range(&program.variables);
        let w_max = w_lo.abs().max(w_hi.abs());
        // with z = 0: (u + M_u)(v + M_v) ≥ (w_max²/M_v)·M_v ≥ w²
        let m_v = if v_max > 0.0 { v_max } else { 1.0 };
        let m_u = (-u_min).max(0.0) + w_max * w_max / m_v;
        let cone = program.add_cone(format!("{label}nadir{n}"), u, v, w);
        program.add_link(z, LinkTarget::ConeU(cone), m_u);
        program.add_link(z, LinkTarget::ConeV(cone), m_v);
    }
    program.selector_groups.push(selectors.clone());

    Ok(FrequencyBlock {
        h,
        p_loss,
        r,
        services,
        decomposition,
        selectors,
        rocof_row,
        steady_state_row,
        h_demand_rocof: hd_rocof,
        h_demand_nadir: hd_nadir,
        spec: *spec,
        chance: chance.cloned(),
        h_demand,
    })
}

/// Builds the stand-alone program: variables H, P_L and one R per service,
/// objective `Σ cost_s·R_s + inertia_cost·H + p_loss_cost·P_L`.
pub fn build_program(problem: &FrequencyProblem) -> Result<(ConicProgram, FrequencyBlock)> {
    if problem.services.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    for s in &problem.services {
        s.validate()?;
    }
    let mut program = ConicProgram::new();
    let (h_lo, h_hi) = problem.inertia;
    let (pl_lo, pl_hi) = problem.p_loss;
    let pl_hi = pl_hi.min(problem.spec.p_loss_max);
    if !(h_lo >= 0.0 && h_lo <= h_hi) {
        return Err(Error::invalid("inertia", format!("bounds [{h_lo}, {h_hi}] are not a valid range")));
    }
    if !(pl_lo >= 0.0 && pl_lo <= pl_hi) {
        return Err(Error::invalid("p_loss", format!("bounds [{pl_lo}, {pl_hi}] are not a valid range")));
    }
    let h = program.add_continuous("H", h_lo, h_hi);
    let p_loss = program.add_continuous("P_L", pl_lo, pl_hi);
    let r: Vec<usize> = problem
        .services
        .iter()
        .map(|s| program.add_continuous(format!("R_{}", s.id), 0.0, s.capacity_max))
        .collect();
    let mut objective = LinExpr::new();
    objective.add_term(h, problem.inertia_cost);
    objective.add_term(p_loss, problem.p_loss_cost);
    for (s, &v) in problem.services.iter().zip(&r) {
        objective.add_term(v, s.headroom_cost);
    }
    program.objective = objective;
    let block = add_frequency_constraints(
        &mut program,
        "",
        &problem.services,
        h,
        p_loss,
        &r,
        &problem.spec,
        problem.chance.as_ref(),
        problem.h_demand,
    )?;
    Ok((program, block))
}

impl FrequencyBlock {
    /// Portfolio with the allocations read from `values` (clamped to capacity).
    pub fn portfolio(&self, values: &[f64]) -> Result<Portfolio> {
        let alloc =
            self.services.iter().zip(&self.r).map(|(s, &v)| values[v].clamp(0.0, s.capacity_max)).collect();
        Portfolio::new(self.services.clone(), alloc)
    }

    /// Snapshot at the point `values` (inertia, largest loss and allocations).
    pub fn snapshot(&self, values: &[f64]) -> Result<SystemSnapshot> {
        let h_demand = match &self.chance {
            Some(c) => c.h_mu,
            None => self.h_demand,
        };
        SystemSnapshot::new(
            values[self.h].max(0.0),
            h_demand,
            values[self.p_loss].max(0.0),
            self.portfolio(values)?,
        )
    }

    /// Independent security assessment of a solver point.
    pub fn assess(&self, values: &[f64], rel_tol: f64) -> Result<SecurityReport> {
        assess_with_tolerance(&self.snapshot(values)?, &self.spec, self.chance.as_ref(), rel_tol)
    }
}
