//! Interval enumeration: one continuous solve per selector hypothesis.
//!
//! Each hypothesis fixes one selector per group to 1; the gated rows and
//! cones of the chosen segments are imposed as written and those of the
//! other segments are removed outright, so no big-M constant is involved.
//! This gives an independent path to the mixed-integer optimum.

use super::bnb::{branch_and_bound, MiOptions};
use super::ipm::IpmOptions;
use super::program::ConicProgram;
use super::solve::{solve_relaxation, LinkMode, Relaxation, SolveResult, SolveStatus};
use crate::error::{Error, Result};

pub fn solve_by_enumeration(program: &ConicProgram) -> Result<SolveResult> {
    solve_by_enumeration_with(program, &IpmOptions::default())
}

pub fn solve_by_enumeration_with(program: &ConicProgram, opts: &IpmOptions) -> Result<SolveResult> {
    program.validate()?;
    let selectors: Vec<usize> = program.selector_groups.iter().flatten().copied().collect();
    if let Some(&other) = program.integers().iter().find(|i| !selectors.contains(i)) {
        return Err(Error::invalid(
            "program",
            format!(
                "enumeration needs the interval selectors to be the only integers; `{}` is not a selector",
                program.variables[other].name
            ),
        ));
    }
    enumerate(program, |lo, hi| {
        Ok(match solve_relaxation(program, lo, hi, LinkMode::Drop, opts)? {
            Relaxation::Infeasible { iterations } => Hypothesis { best: None, nodes: 1, iterations },
            Relaxation::Feasible { values, objective, iterations } => {
                Hypothesis { best: Some((objective, objective, values)), nodes: 1, iterations }
            }
        })
    })
}

/// Enumeration for programs with further integers: each selector hypothesis
/// is searched by branch-and-bound with the unselected segments removed.
/// The bound is the smallest bound over the feasible hypotheses.
pub fn solve_by_enumeration_mi(program: &ConicProgram, opts: &MiOptions) -> Result<SolveResult> {
    program.validate()?;
    enumerate(program, |lo, hi| {
        let (r, _) = branch_and_bound(program, lo, hi, LinkMode::Drop, opts)?;
        Ok(Hypothesis {
            best: r.is_feasible().then_some((r.objective, r.bound, r.values)),
            nodes: r.node_count,
            iterations: r.iterations,
        })
    })
}

struct Hypothesis {
    /// (objective, bound, values)
    best: Option<(f64, f64, Vec<f64>)>,
    nodes: usize,
    iterations: usize,
}

fn enumerate(
    program: &ConicProgram,
    mut solve: impl FnMut(&[f64], &[f64]) -> Result<Hypothesis>,
) -> Result<SolveResult> {
    let base_lo: Vec<f64> = program.variables.iter().map(|v| v.lo).collect();
    let base_hi: Vec<f64> = program.variables.iter().map(|v| v.hi).collect();

    let groups = &program.selector_groups;
    let mut choice = vec![0usize; groups.len()];
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    let mut bound = f64::INFINITY;
    let (mut nodes, mut iterations) = (0, 0);
    loop {
        let mut lo = base_lo.clone();
        let mut hi = base_hi.clone();
        let mut admissible = true;
        for (group, &pick) in groups.iter().zip(&choice) {
            for (k, &z) in group.iter().enumerate() {
                let value = if k == pick { 1.0 } else { 0.0 };
                admissible &= base_lo[z] <= value && value <= base_hi[z];
                lo[z] = value;
                hi[z] = value;
            }
        }
        if admissible {
            let h = solve(&lo, &hi)?;
            nodes += h.nodes;
            iterations += h.iterations;
            if let Some((objective, b, values)) = h.best {
                bound = bound.min(b);
                if best.as_ref().is_none_or(|(o, _, _)| objective < *o) {
                    best = Some((objective, values, choice.clone()));
                }
            }
        }
        // odometer over the cartesian product
        let mut g = 0;
        loop {
            if g == groups.len() {
                return Ok(finish(best, bound, nodes, iterations));
            }
            choice[g] += 1;
            if choice[g] < groups[g].len() {
                break;
            }
            choice[g] = 0;
            g += 1;
        }
    }
}

fn finish(
    best: Option<(f64, Vec<f64>, Vec<usize>)>,
    bound: f64,
    nodes: usize,
    iterations: usize,
) -> SolveResult {
    match best {
        None => SolveResult::infeasible(nodes, iterations),
        Some((objective, values, choice)) => {
            let bound = bound.min(objective);
            let duality_gap =
                if objective == bound { 0.0 } else { (objective - bound) / objective.abs().max(1e-9) };
            SolveResult {
                status: if duality_gap <= 1e-6 { SolveStatus::Optimal } else { SolveStatus::GapReached },
                objective,
                bound,
                values,
                duality_gap,
                node_count: nodes,
                active_interval: choice.first().copied(),
                active_intervals: choice,
                iterations,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::bnb::solve_mi;
    use crate::conic::builder::{build_program, FrequencyProblem};
    use crate::model::SecuritySpec;
    use crate::reference;

    fn validation_problem() -> FrequencyProblem {
        FrequencyProblem {
            services: reference::validation_services().into_iter().map(|s| s.with_cost(1.0)).collect(),
            spec: SecuritySpec::great_britain(),
            chance: None,
            h_demand: 0.0,
            inertia: (180_000.0, 180_000.0),
            p_loss: (1800.0, 1800.0),
            inertia_cost: 0.0,
            p_loss_cost: 0.0,
        }
    }

    #[test]
    fn inactive_big_m_rows_can_be_removed() {
        let (program, block) = build_program(&validation_problem()).unwrap();
        let mi = solve_mi(&program, 0.0).unwrap();
        let chosen = mi.active_interval.unwrap();
        let mut lo: Vec<f64> = program.variables.iter().map(|v| v.lo).collect();
        let mut hi: Vec<f64> = program.variables.iter().map(|v| v.hi).collect();
        for (k, &z) in block.selectors.iter().enumerate() {
            let v = if k == chosen { 1.0 } else { 0.0 };
            lo[z] = v;
            hi[z] = v;
        }
        let opts = IpmOptions::default();
        let objective = |mode| match solve_relaxation(&program, &lo, &hi, mode, &opts).unwrap() {
            Relaxation::Feasible { objective, .. } => objective,
            Relaxation::Infeasible { .. } => panic!("selected interval must be feasible"),
        };
        let gated = objective(LinkMode::BigM);
        let dropped = objective(LinkMode::Drop);
        assert!((gated - dropped).abs() <= 1e-6 * gated.abs(), "{gated} vs {dropped}");
        assert!((gated - mi.objective).abs() <= 1e-6 * gated.abs());
    }

    #[test]
    fn single_interval_matches_continuous() {
        let mut pr = validation_problem();
        pr.services = vec![crate::model::FrService::new("a", 5000.0, 10.0, 0.0).with_cost(1.0)];
        pr.inertia = (100_000.0, 100_000.0);
        pr.p_loss = (1000.0, 1000.0);
        let (program, _) = build_program(&pr).unwrap();
        let e = solve_by_enumeration(&program).unwrap();
        let c = crate::conic::solve::solve_continuous(&program).unwrap();
        assert_eq!(e.node_count, 1);
        assert!((e.objective - c.objective).abs() <= 1e-9 * c.objective);
    }

    #[test]
    fn rejects_non_selector_integers() {
        let (mut program, _) = build_program(&validation_problem()).unwrap();
        program.add_binary("commit");
        assert!(solve_by_enumeration(&program).is_err());
    }

    #[test]
    fn mixed_integer_hypotheses_match_branch_and_bound() {
        use crate::conic::program::{LinExpr, VarKind};
        let mut pr = validation_problem();
        pr.inertia = (60_000.0, 240_000.0);
        let (mut program, block) = build_program(&pr).unwrap();
        // inertia only in blocks of 20 GW·s at 1 per block
        let n = program.add_var("blocks", 0.0, 12.0, VarKind::Integer);
        program.add_eq("inertia_blocks", LinExpr::var(block.h).term(n, -20_000.0));
        program.objective.add_term(n, 150.0);
        let opts = MiOptions { gap: 0.0, ..MiOptions::default() };
        let e = solve_by_enumeration_mi(&program, &opts).unwrap();
        let (m, _) = crate::conic::bnb::solve_mi_with(&program, &opts).unwrap();
        assert!(
            (e.objective - m.objective).abs() <= 1e-6 * m.objective,
            "{} vs {}",
            e.objective,
            m.objective
        );
        assert_eq!(e.values[n].round(), m.values[n].round());
    }
}
