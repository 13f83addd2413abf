//! Best-first branch-and-bound over the integer variables of a [`ConicProgram`].
//!
//! Children inherit their parent's relaxation bound and are solved lazily when
//! popped. Until a first incumbent exists the search plunges depth-first,
//! taking the child on the rounding side of the branching value first; after
//! that the queue is ordered by (bound, insertion id). Branching picks the
//! most fractional variable (lowest index on ties), so runs are
//! deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::ipm::IpmOptions;
use super::program::ConicProgram;
use super::solve::{solve_relaxation, LinkMode, Relaxation, SolveResult, SolveStatus};
use crate::error::{Error, Result};

/// Integrality tolerance.
pub const INTEGER_TOL: f64 = 1e-6;

/// Requested relative gap used when none is given.
pub const DEFAULT_GAP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiOptions {
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    pub node_limit: usize,
    pub ipm: IpmOptions,
}

impl Default for MiOptions {
    fn default() -> Self {
        MiOptions { gap: DEFAULT_GAP, node_limit: 200_000, ipm: IpmOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeOutcome {
    /// Pruned before solving: parent bound could not beat the incumbent.
    PrunedByBound,
    Infeasible,
    /// Relaxation solved but its bound could not beat the incumbent.
    Fathomed,
    /// Integral relaxation; produced an incumbent candidate.
    Integral,
    Branched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Bound inherited from the parent relaxation.
    pub parent_bound: f64,
    /// Relaxation objective at this node, if solved and feasible.
    pub relaxation: Option<f64>,
    pub outcome: NodeOutcome,
}

struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    bound: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: invert so the lowest bound, then oldest id, pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

/// Solves `program` to the relative `gap`.
pub fn solve_mi(program: &ConicProgram, gap: f64) -> Result<SolveResult> {
    let opts = MiOptions { gap, ..MiOptions::default() };
    Ok(solve_mi_with(program, &opts)?.0)
}

fn most_fractional(values: &[f64], integers: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in integers {
        let frac = (values[i] - values[i].floor()).min(values[i].ceil() - values[i]);
        if frac > INTEGER_TOL && best.is_none_or(|(_, f)| frac > f) {
            best = Some((i, frac));
        }
    }
    best.map(|(i, _)| i)
}

/// Branch-and-bound with explicit options; also returns the node log.
pub fn solve_mi_with(program: &ConicProgram, opts: &MiOptions) -> Result<(SolveResult, Vec<NodeRecord>)> {
    program.validate()?;
    let lo: Vec<f64> = program.variables.iter().map(|v| v.lo).collect();
    let hi: Vec<f64> = program.variables.iter().map(|v| v.hi).collect();
    branch_and_bound(program, &lo, &hi, LinkMode::BigM, opts)
}

/// Search below the root box `lo`/`hi`.
pub(crate) fn branch_and_bound(
    program: &ConicProgram,
    lo: &[f64],
    hi: &[f64],
    mode: LinkMode,
    opts: &MiOptions,
) -> Result<(SolveResult, Vec<NodeRecord>)> {
    if !(opts.gap >= 0.0) {
        return Err(Error::invalid("gap", format!("must be non-negative, got {}", opts.gap)));
    }
    let integers = program.integers();
    let root_lo: Vec<f64> =
        program.variables.iter().zip(lo).map(|(v, &l)| if v.is_integer() { l.ceil() } else { l }).collect();
    let root_hi: Vec<f64> =
        program.variables.iter().zip(hi).map(|(v, &h)| if v.is_integer() { h.floor() } else { h }).collect();

    let mut heap = BinaryHeap::new();
    let mut plunge: Vec<Node> = Vec::new();
    plunge.push(Node { id: 0, parent: None, depth: 0, bound: f64::NEG_INFINITY, lo: root_lo, hi: root_hi });
    let mut next_id = 1;
    let mut log = Vec::new();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    // lowest bound among subtrees discarded while still below the incumbent
    let mut pruned_bound = f64::INFINITY;
    let mut iterations = 0;
    let mut nodes = 0;

    let cutoff = |inc: f64| inc - (opts.gap * inc.abs()).max(1e-7 * inc.abs().max(1.0));

    loop {
        let next = if incumbent.is_none() {
            plunge.pop().or_else(|| heap.pop())
        } else {
            heap.extend(plunge.drain(..));
            heap.pop()
        };
        let Some(node) = next else { break };
        if let Some((inc, _)) = &incumbent {
            if node.bound >= cutoff(*inc) {
                if node.bound < *inc {
                    pruned_bound = pruned_bound.min(node.bound);
                }
                log.push(NodeRecord {
                    id: node.id,
                    parent: node.parent,
                    depth: node.depth,
                    parent_bound: node.bound,
                    relaxation: None,
                    outcome: NodeOutcome::PrunedByBound,
                });
                continue;
            }
        }
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(Error::NodeLimit { limit: opts.node_limit });
        }
        let relaxation = solve_relaxation(program, &node.lo, &node.hi, mode, &opts.ipm)?;
        let mut record = NodeRecord {
            id: node.id,
            parent: node.parent,
            depth: node.depth,
            parent_bound: node.bound,
            relaxation: None,
            outcome: NodeOutcome::Infeasible,
        };
        let (values, objective) = match relaxation {
            Relaxation::Infeasible { iterations: it } => {
                iterations += it;
                log.push(record);
                continue;
            }
            Relaxation::Feasible { values, objective, iterations: it } => {
                iterations += it;
                (values, objective)
            }
        };
        record.relaxation = Some(objective);
        if let Some((inc, _)) = &incumbent {
            if objective >= cutoff(*inc) {
                if objective < *inc {
                    pruned_bound = pruned_bound.min(objective);
                }
                record.outcome = NodeOutcome::Fathomed;
                log.push(record);
                continue;
            }
        }
        match most_fractional(&values, &integers) {
            None => {
                record.outcome = NodeOutcome::Integral;
                // re-solve with the integers pinned for a clean incumbent
                let mut lo = node.lo.clone();
                let mut hi = node.hi.clone();
                for &i in &integers {
                    let v = values[i].round();
                    lo[i] = v;
                    hi[i] = v;
                }
                let candidate = if integers.iter().all(|&i| node.lo[i] == node.hi[i]) {
                    Some((objective, values))
                } else {
                    match solve_relaxation(program, &lo, &hi, mode, &opts.ipm)? {
                        Relaxation::Feasible { values, objective, iterations: it } => {
                            iterations += it;
                            Some((objective, values))
                        }
                        Relaxation::Infeasible { iterations: it } => {
                            iterations += it;
                            None
                        }
                    }
                };
                if let Some((obj, vals)) = candidate {
                    if incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc) {
                        incumbent = Some((obj, vals));
                    }
                }
                log.push(record);
            }
            Some(var) => {
                record.outcome = NodeOutcome::Branched;
                log.push(record);
                let value = values[var];
                let mut down_hi = node.hi.clone();
                down_hi[var] = value.floor();
                let mut up_lo = node.lo.clone();
                up_lo[var] = value.ceil();
                let mut children = [(node.lo.clone(), down_hi), (up_lo, node.hi.clone())].map(|(lo, hi)| {
                    let child = Node {
                        id: next_id,
                        parent: Some(node.id),
                        depth: node.depth + 1,
                        bound: objective,
                        lo,
                        hi,
                    };
                    next_id += 1;
                    child
                });
                if incumbent.is_none() {
                    // the last pushed is explored first
                    if value - value.floor() < 0.5 {
                        children.swap(0, 1);
                    }
                    plunge.extend(children);
                } else {
                    heap.extend(children);
                }
            }
        }
    }

    let result = match incumbent {
        None => SolveResult::infeasible(nodes, iterations),
        Some((objective, values)) => {
            let bound = pruned_bound.min(objective);
            let duality_gap =
                if objective == bound { 0.0 } else { (objective - bound) / objective.abs().max(1e-9) };
            let status = if duality_gap <= 1e-6 { SolveStatus::Optimal } else { SolveStatus::GapReached };
            let active_intervals = program.active_intervals(&values);
            SolveResult {
                status,
                objective,
                bound,
                duality_gap,
                node_count: nodes,
                active_interval: active_intervals.first().copied(),
                active_intervals,
                values,
                iterations,
            }
        }
    };
    Ok((result, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::program::{LinExpr, VarKind};

    #[test]
    fn knapsack() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c ≤ 5 over binaries → a = b = 1, value 9
        let mut p = ConicProgram::new();
        let a = p.add_binary("a");
        let b = p.add_binary("b");
        let c = p.add_binary("c");
        p.add_le("cap", LinExpr::var(a).scaled(2.0).term(b, 3.0).term(c, 1.0).plus(-5.0));
        p.objective = LinExpr::var(a).scaled(-5.0).term(b, -4.0).term(c, -3.0);
        let (r, log) = solve_mi_with(&p, &MiOptions { gap: 0.0, ..MiOptions::default() }).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + 9.0).abs() < 1e-6, "{}", r.objective);
        assert!(log.len() > 1);
    }

    #[test]
    fn general_integer() {
        // min x s.t. x ≥ 2.5, x integer in [0, 10]
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 10.0, VarKind::Integer);
        p.add_le("r", LinExpr::constant(2.5).term(x, -1.0));
        p.objective = LinExpr::var(x);
        let r = solve_mi(&p, 0.0).unwrap();
        assert!((r.values[x] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_integer_program() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 10.0, VarKind::Integer);
        p.add_le("lo", LinExpr::constant(2.2).term(x, -1.0));
        p.add_le("hi", LinExpr::var(x).plus(-2.8));
        let r = solve_mi(&p, 0.005).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn node_limit() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 10.0, VarKind::Integer);
        p.add_le("lo", LinExpr::constant(2.2).term(x, -1.0));
        p.add_le("hi", LinExpr::var(x).plus(-2.8));
        let opts = MiOptions { node_limit: 1, ..MiOptions::default() };
        assert!(matches!(solve_mi_with(&p, &opts), Err(Error::NodeLimit { limit: 1 })));
    }
}
