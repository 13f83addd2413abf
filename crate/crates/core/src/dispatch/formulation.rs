//! Mixed-integer conic program of a dispatch case.
//!
//! Per period and unit group: committed count `n`, output `p`, FR headroom
//! `r` and, for aggregated groups, an "any unit on" binary `y`. A group is a
//! whole class, or a single unit when the class is modelled individually.
//! Aggregated groups do not track how output is split between their units,
//! so a committed aggregated class counts as a potential loss of its rated
//! power. Individual units contribute their actual output.

use super::model::{DispatchCase, GenUnit};
use crate::conic::{add_frequency_constraints, ConicProgram, LinExpr, VarKind};
use crate::error::Result;
use crate::security::normal_inv_cdf;

/// How much of the security requirement set is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Requirements {
    /// Power balance and unit limits only.
    Balance,
    Rocof,
    SteadyState,
    Full,
}

#[derive(Debug, Clone)]
pub(crate) struct Group {
    /// Index into `case.units`.
    pub class: usize,
    pub count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct GroupVars {
    pub n: usize,
    pub p: usize,
    pub r: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct PeriodVars {
    pub groups: Vec<GroupVars>,
    pub wind: usize,
    /// Stand-alone provision per catalog service, where available.
    pub external: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Formulation {
    pub program: ConicProgram,
    pub groups: Vec<Group>,
    pub periods: Vec<PeriodVars>,
}

fn clean(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_")
}

pub(crate) fn groups(case: &DispatchCase) -> Vec<Group> {
    let mut out = Vec::new();
    for (class, u) in case.units.iter().enumerate() {
        if u.count == 0 {
            continue;
        }
        if u.individual {
            out.extend((0..u.count).map(|_| Group { class, count: 1 }));
        } else {
            out.push(Group { class, count: u.count });
        }
    }
    out
}

fn group_label(case: &DispatchCase, groups: &[Group], g: usize) -> String {
    let class = groups[g].class;
    let u = &case.units[class];
    if u.individual {
        let k = groups[..g].iter().filter(|x| x.class == class).count();
        format!("{}#{k}", clean(&u.class))
    } else {
        clean(&u.class)
    }
}

/// Headroom variable is only created for classes that can hold FR.
fn offers_fr(u: &GenUnit) -> bool {
    u.fr_service_id.is_some() && u.max_fr_deliverable > 0.0
}

pub(crate) fn formulate(case: &DispatchCase, level: Requirements) -> Result<Formulation> {
    case.validate()?;
    let groups = groups(case);
    let labels: Vec<String> = (0..groups.len()).map(|g| group_label(case, &groups, g)).collect();
    let mut pr = ConicProgram::new();
    let mut objective = LinExpr::new();
    let mut periods: Vec<PeriodVars> = Vec::with_capacity(case.periods);
    // per group and period from the second on: (start-ups, count before, count after)
    let mut history: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); groups.len()];
    let h_max: f64 = groups.iter().map(|g| g.count as f64 * case.units[g.class].unit_inertia()).sum();
    let spec = &case.spec;

    for t in 0..case.periods {
        let tag = format!("t{t}_");
        let p_loss = pr.add_continuous(format!("{tag}P_L"), 0.0, spec.p_loss_max);
        let h = pr.add_continuous(format!("{tag}H"), 0.0, h_max);
        let mut inertia = LinExpr::var(h);
        let mut balance = LinExpr::constant(-case.demand[t]);
        let mut vars = Vec::with_capacity(groups.len());

        for (g, group) in groups.iter().enumerate() {
            let u = &case.units[group.class];
            let c = group.count as f64;
            let name = format!("{tag}{}", labels[g]);
            let n = if group.count == 1 {
                pr.add_binary(format!("{name}_n"))
            } else {
                pr.add_var(format!("{name}_n"), 0.0, c, VarKind::Integer)
            };
            let p = pr.add_continuous(format!("{name}_p"), 0.0, c * u.rated_power);
            pr.add_le(format!("{name}_min"), LinExpr::var(n).scaled(u.min_output()).term(p, -1.0));
            let mut cap = LinExpr::var(p).term(n, -u.rated_power);
            let r = offers_fr(u).then(|| {
                let r = pr.add_continuous(format!("{name}_r"), 0.0, c * u.max_fr_deliverable);
                pr.add_le(format!("{name}_frcap"), LinExpr::var(r).term(n, -u.max_fr_deliverable));
                cap.add_term(r, 1.0);
                r
            });
            pr.add_le(format!("{name}_max"), cap);
            if group.count == 1 {
                pr.add_le(format!("{name}_loss"), LinExpr::var(p).term(p_loss, -1.0));
            } else {
                let y = pr.add_binary(format!("{name}_on"));
                pr.add_le(format!("{name}_any"), LinExpr::var(n).term(y, -c));
                pr.add_le(format!("{name}_loss"), LinExpr::var(y).scaled(u.rated_power).term(p_loss, -1.0));
            }
            inertia.add_term(n, -u.unit_inertia());
            balance.add_term(p, 1.0);
            objective.add_term(n, u.no_load_cost);
            objective.add_term(p, u.marginal_cost);

            if t > 0 {
                // Start-ups need not be integral: once the counts are, the
                // least start-up count max(Δn, 0) satisfies every row below
                // and costs no more. Shutdowns are s − Δn.
                let s = pr.add_continuous(format!("{name}_start"), 0.0, c);
                let prev = periods[t - 1].groups[g].n;
                pr.add_le(format!("{name}_start_lo"), LinExpr::var(n).term(prev, -1.0).term(s, -1.0));
                objective.add_term(s, u.startup_cost);
                history[g].push((s, prev, n));
                // units started within the last `min_up` periods are still on
                let up = u.min_up_periods as usize;
                if up >= 2 {
                    let mut row = LinExpr::var(n).scaled(-1.0);
                    for &(sv, _, _) in history[g].iter().rev().take(up) {
                        row.add_term(sv, 1.0);
                    }
                    pr.add_le(format!("{name}_min_up"), row);
                }
                // units stopped within the last `min_down` periods stay off
                let down = u.min_down_periods as usize;
                if down >= 2 {
                    let mut row = LinExpr::var(n).plus(-c);
                    for &(sv, before, after) in history[g].iter().rev().take(down) {
                        row.add_term(sv, 1.0);
                        row.add_term(after, -1.0);
                        row.add_term(before, 1.0);
                    }
                    pr.add_le(format!("{name}_min_down"), row);
                }
            }
            vars.push(GroupVars { n, p, r });
        }
        // identical single units: commit in order (single period only, where
        // relabelling cannot interact with start-up history)
        if case.periods == 1 {
            for g in 1..groups.len() {
                if groups[g].class == groups[g - 1].class && case.units[groups[g].class].individual {
                    pr.add_le(
                        format!("{tag}{}_order", labels[g]),
                        LinExpr::var(vars[g].n).term(vars[g - 1].n, -1.0),
                    );
                }
            }
        }

        let wind = pr.add_continuous(format!("{tag}wind"), 0.0, case.wind(t));
        balance.add_term(wind, 1.0);
        pr.add_eq(format!("{tag}balance"), balance);
        pr.add_eq(format!("{tag}inertia"), inertia);

        // R_s = unit headroom + stand-alone provision
        let mut r_vars = Vec::with_capacity(case.fr_catalog.len());
        let mut ext_vars = Vec::with_capacity(case.fr_catalog.len());
        for s in &case.fr_catalog {
            let id = clean(&s.id);
            let rv = pr.add_continuous(format!("{tag}R_{id}"), 0.0, s.capacity_max);
            objective.add_term(rv, s.headroom_cost);
            let mut link = LinExpr::var(rv);
            for (group, gv) in groups.iter().zip(&vars) {
                if let Some(r) = gv.r {
                    if case.units[group.class].fr_service_id.as_deref() == Some(s.id.as_str()) {
                        link.add_term(r, -1.0);
                    }
                }
            }
            let ext = case.external(&s.id).min(s.capacity_max);
            let xv = (ext > 0.0).then(|| {
                let xv = pr.add_continuous(format!("{tag}X_{id}"), 0.0, ext);
                link.add_term(xv, -1.0);
                xv
            });
            pr.add_eq(format!("{tag}R_{id}_sources"), link);
            r_vars.push(rv);
            ext_vars.push(xv);
        }

        let chance = case.chance_in(t);
        let h_mu = case.demand_inertia(t);
        match level {
            Requirements::Balance => {}
            Requirements::Rocof | Requirements::SteadyState => {
                let hd = match &chance {
                    Some(c) => c.h_mu - normal_inv_cdf(c.eta)? * c.sigma,
                    None => h_mu,
                };
                pr.add_le(
                    format!("{tag}rocof"),
                    LinExpr::var(p_loss)
                        .scaled(spec.f_nominal / (2.0 * spec.rocof_max))
                        .term(h, -1.0)
                        .plus(-hd),
                );
                if level == Requirements::SteadyState {
                    let mut steady = LinExpr::var(p_loss);
                    for &rv in &r_vars {
                        steady.add_term(rv, -1.0);
                    }
                    pr.add_le(format!("{tag}steady_state"), steady);
                }
            }
            Requirements::Full => {
                add_frequency_constraints(
                    &mut pr,
                    &tag,
                    &case.fr_catalog,
                    h,
                    p_loss,
                    &r_vars,
                    spec,
                    chance.as_ref(),
                    h_mu,
                )?;
            }
        }
        periods.push(PeriodVars { groups: vars, wind, external: ext_vars });
    }
    pr.objective = objective;
    Ok(Formulation { program: pr, groups, periods })
}

/// The full frequency-secured program of `case`, e.g. for export.
pub fn dispatch_program(case: &DispatchCase) -> Result<ConicProgram> {
    Ok(formulate(case, Requirements::Full)?.program)
}
