//! Lowering of a [`ConicProgram`] to standard conic form and continuous solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ipm::{self, ConeProblem, IpmOptions, IpmStatus};
use super::program::{ConicProgram, LinExpr, LinkTarget, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Branch-and-bound stopped once the requested relative gap was reached.
    GapReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective at `values`; +∞ when infeasible.
    pub objective: f64,
    /// Best proven lower bound on the objective.
    pub bound: f64,
    /// Primal values, one per program variable; empty when infeasible.
    pub values: Vec<f64>,
    /// Relative gap between `objective` and `bound`.
    pub duality_gap: f64,
    pub node_count: usize,
    /// Interval selected in the first selector group.
    pub active_interval: Option<usize>,
    /// Interval selected in each selector group.
    pub active_intervals: Vec<usize>,
    /// Interior-point iterations across all solves.
    pub iterations: usize,
}

impl SolveResult {
    pub(crate) fn infeasible(node_count: usize, iterations: usize) -> Self {
        SolveResult {
            status: SolveStatus::Infeasible,
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            values: Vec::new(),
            duality_gap: 0.0,
            node_count,
            active_interval: None,
            active_intervals: Vec::new(),
            iterations,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }

    pub fn value(&self, var: usize) -> f64 {
        self.values[var]
    }
}

/// How big-M links are materialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LinkMode {
    /// `expr ≤ M(1 − z)` and `u + M(1 − z)` for every link.
    BigM,
    /// For links whose binary is fixed: drop the target when z = 0, keep it
    /// ungated when z = 1.
    Drop,
}

struct Lowered {
    problem: ConeProblem,
    columns: Vec<Option<usize>>,
    objective_constant: f64,
}

/// Either the lowered problem or a marker that the bounds alone are infeasible.
enum Lowering {
    Problem(Box<Lowered>),
    Infeasible,
}

const CONSTANT_TOL: f64 = 1e-9;

struct Builder<'a> {
    columns: &'a [Option<usize>],
    fixed: &'a [f64],
    n: usize,
}

impl Builder<'_> {
    /// Dense coefficient row over free columns plus the constant part.
    fn affine(&self, expr: &LinExpr) -> (Vec<f64>, f64, f64) {
        let mut row = vec![0.0; self.n];
        let mut constant = expr.constant;
        let mut magnitude = expr.constant.abs();
        for &(v, c) in &expr.terms {
            match self.columns[v] {
                Some(col) => row[col] += c,
                None => {
                    constant += c * self.fixed[v];
                    magnitude = magnitude.max((c * self.fixed[v]).abs());
                }
            }
        }
        (row, constant, magnitude)
    }
}

fn lower(program: &ConicProgram, lo: &[f64], hi: &[f64], mode: LinkMode) -> Lowering {
    let nv = program.variables.len();
    let mut columns = vec![None; nv];
    let mut fixed = vec![0.0; nv];
    let mut n = 0;
    for i in 0..nv {
        if lo[i] > hi[i] {
            return Lowering::Infeasible;
        }
        if lo[i] == hi[i] {
            fixed[i] = lo[i];
        } else {
            columns[i] = Some(n);
            n += 1;
        }
    }
    let builder = Builder { columns: &columns, fixed: &fixed, n };

    // gated expressions
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut row_active = vec![true; program.rows.len()];
    let mut row_exprs: Vec<LinExpr> = program.rows.iter().map(|r| r.expr.clone()).collect();
    let mut cone_active = vec![true; program.cones.len()];
    let mut cone_uv: Vec<(LinExpr, LinExpr)> =
        program.cones.iter().map(|c| (c.u.clone(), c.v.clone())).collect();
    for link in &program.links {
        let z = link.binary;
        let z_fixed = columns[z].is_none();
        if mode == LinkMode::Drop && z_fixed {
            if fixed[z] < 0.5 {
                match link.target {
                    LinkTarget::Row(r) => row_active[r] = false,
                    LinkTarget::ConeU(c) | LinkTarget::ConeV(c) => cone_active[c] = false,
                }
            }
            continue;
        }
        // + M(1 − z) on the relaxed side
        let mut gate = LinExpr::constant(link.big_m);
        gate.add_term(z, -link.big_m);
        match link.target {
            LinkTarget::Row(r) => row_exprs[r].add_expr(&gate, -1.0),
            LinkTarget::ConeU(c) => cone_uv[c].0.add_expr(&gate, 1.0),
            LinkTarget::ConeV(c) => cone_uv[c].1.add_expr(&gate, 1.0),
        }
    }

    let mut eq_rows = Vec::new();
    for (i, r) in program.rows.iter().enumerate() {
        if !row_active[i] {
            continue;
        }
        let (coef, constant, magnitude) = builder.affine(&row_exprs[i]);
        if coef.iter().all(|&c| c == 0.0) {
            let tol = CONSTANT_TOL * magnitude.max(1.0);
            let ok = match r.sense {
                Sense::Le => constant <= tol,
                Sense::Eq => constant.abs() <= tol,
            };
            if !ok {
                return Lowering::Infeasible;
            }
            continue;
        }
        match r.sense {
            Sense::Le => rows.push((coef, constant)),
            Sense::Eq => eq_rows.push((coef, constant)),
        }
    }

    // bounds of free variables
    let mut bound_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..nv {
        if let Some(col) = columns[i] {
            if lo[i].is_finite() {
                let mut row = vec![0.0; n];
                row[col] = -1.0;
                bound_rows.push((row, lo[i]));
            }
            if hi[i].is_finite() {
                let mut row = vec![0.0; n];
                row[col] = 1.0;
                bound_rows.push((row, -hi[i]));
            }
        }
    }

    let mut soc_rows: Vec<[(Vec<f64>, f64); 3]> = Vec::new();
    for (i, cone) in program.cones.iter().enumerate() {
        if !cone_active[i] {
            continue;
        }
        let (u, cu, mu) = builder.affine(&cone_uv[i].0);
        let (v, cv, mv) = builder.affine(&cone_uv[i].1);
        let (w, cw, mw) = builder.affine(&cone.w);
        let all_constant = u.iter().chain(&v).chain(&w).all(|&c| c == 0.0);
        if all_constant {
            let scale = mu.max(mv).max(mw).max(1.0);
            let tol = CONSTANT_TOL * scale;
            let ok = cu >= -tol && cv >= -tol && cu * cv - cw * cw >= -tol * scale;
            if !ok {
                return Lowering::Infeasible;
            }
            continue;
        }
        // s = (u + v, 2w, u − v) ∈ Q³ with s = h − Gx
        let s0: Vec<f64> = u.iter().zip(&v).map(|(a, b)| -(a + b)).collect();
        let s1: Vec<f64> = w.iter().map(|a| -2.0 * a).collect();
        let s2: Vec<f64> = u.iter().zip(&v).map(|(a, b)| -(a - b)).collect();
        soc_rows.push([(s0, cu + cv), (s1, 2.0 * cw), (s2, cu - cv)]);
    }

    let nonneg = rows.len() + bound_rows.len();
    let m = nonneg + 3 * soc_rows.len();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut k = 0;
    // Gx + s = h: row `a·x + const ≤ 0` gives G = a, h = −const
    for (coef, constant) in &rows {
        for j in 0..n {
            g[(k, j)] = coef[j];
        }
        h[k] = -constant;
        k += 1;
    }
    for (coef, constant) in &bound_rows {
        for j in 0..n {
            g[(k, j)] = coef[j];
        }
        h[k] = -constant;
        k += 1;
    }
    for block in &soc_rows {
        for (coef, constant) in block {
            for j in 0..n {
                g[(k, j)] = coef[j];
            }
            h[k] = *constant;
            k += 1;
        }
    }
    let mut a = DMatrix::zeros(eq_rows.len(), n);
    let mut b = DVector::zeros(eq_rows.len());
    for (i, (coef, constant)) in eq_rows.iter().enumerate() {
        for j in 0..n {
            a[(i, j)] = coef[j];
        }
        b[i] = -constant;
    }
    let (c, objective_constant, _) = builder.affine(&program.objective);
    Lowering::Problem(Box::new(Lowered {
        problem: ConeProblem { c: DVector::from_vec(c), a, b, g, h, nonneg, soc: vec![3; soc_rows.len()] },
        columns,
        objective_constant,
    }))
}

#[derive(Debug, Clone)]
pub(crate) enum Relaxation {
    Feasible { values: Vec<f64>, objective: f64, iterations: usize },
    Infeasible { iterations: usize },
}

/// Solves the continuous problem with variable bounds `lo`/`hi` (integrality ignored).
pub(crate) fn solve_relaxation(
    program: &ConicProgram,
    lo: &[f64],
    hi: &[f64],
    mode: LinkMode,
    opts: &IpmOptions,
) -> Result<Relaxation> {
    let lowered = match lower(program, lo, hi, mode) {
        Lowering::Infeasible => return Ok(Relaxation::Infeasible { iterations: 0 }),
        Lowering::Problem(l) => *l,
    };
    let fixed_values = |x: Option<&DVector<f64>>| -> Vec<f64> {
        lowered
            .columns
            .iter()
            .enumerate()
            .map(|(i, col)| match (col, x) {
                (Some(c), Some(x)) => x[*c].clamp(lo[i], hi[i]),
                _ => lo[i],
            })
            .collect()
    };
    if lowered.problem.c.is_empty() {
        // every variable fixed and every constraint already checked
        let values = fixed_values(None);
        return Ok(Relaxation::Feasible {
            objective: program.objective.eval(&values),
            values,
            iterations: 0,
        });
    }
    let sol = ipm::solve(&lowered.problem, opts)?;
    match sol.status {
        IpmStatus::Optimal => {
            let values = fixed_values(Some(&sol.x));
            Ok(Relaxation::Feasible {
                objective: sol.primal_objective + lowered.objective_constant,
                values,
                iterations: sol.iterations,
            })
        }
        IpmStatus::PrimalInfeasible => Ok(Relaxation::Infeasible { iterations: sol.iterations }),
        IpmStatus::DualInfeasible => {
            Err(Error::invalid("objective", "unbounded below over the feasible set"))
        }
    }
}

/// Solves the continuous relaxation of `program`: integer variables are
/// relaxed to their bounds, so fix them (lo = hi) to solve a subproblem.
pub fn solve_continuous(program: &ConicProgram) -> Result<SolveResult> {
    solve_continuous_with(program, &IpmOptions::default())
}

pub fn solve_continuous_with(program: &ConicProgram, opts: &IpmOptions) -> Result<SolveResult> {
    program.validate()?;
    let lo: Vec<f64> = program.variables.iter().map(|v| v.lo).collect();
    let hi: Vec<f64> = program.variables.iter().map(|v| v.hi).collect();
    match solve_relaxation(program, &lo, &hi, LinkMode::BigM, opts)? {
        Relaxation::Infeasible { iterations } => Ok(SolveResult::infeasible(1, iterations)),
        Relaxation::Feasible { values, objective, iterations } => {
            let active_intervals = program.active_intervals(&values);
            Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective,
                bound: objective,
                duality_gap: 0.0,
                node_count: 1,
                active_interval: active_intervals.first().copied(),
                active_intervals,
                values,
                iterations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::program::LinExpr;

    #[test]
    fn fixed_variables_are_substituted() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 2.0, 2.0);
        let y = p.add_continuous("y", 0.0, 10.0);
        p.add_le("r", LinExpr::var(x).term(y, -1.0));
        p.objective = LinExpr::var(y).term(x, 3.0);
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 8.0).abs() < 1e-7);
        assert_eq!(r.values[0], 2.0);
    }

    #[test]
    fn constant_row_violation_is_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 2.0, 2.0);
        p.add_le("r", LinExpr::var(x).plus(-1.0));
        assert_eq!(solve_continuous(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn feasibility_program_has_zero_objective() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 0.0, 10.0);
        let y = p.add_continuous("y", 0.0, 10.0);
        p.add_cone("c", LinExpr::var(x), LinExpr::var(y), LinExpr::constant(1.0));
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
        assert!(p.max_violation(&r.values) < 1e-8);
    }

    #[test]
    fn dropped_links_remove_rows() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 0.0, 10.0);
        let z = p.add_var("z", 0.0, 0.0, crate::conic::program::VarKind::Binary);
        let r = p.add_le("r", LinExpr::constant(5.0).term(x, -1.0));
        p.add_link(z, LinkTarget::Row(r), 5.0);
        p.objective = LinExpr::var(x);
        let lo = [0.0, 0.0];
        let hi = [10.0, 0.0];
        match solve_relaxation(&p, &lo, &hi, LinkMode::Drop, &IpmOptions::default()).unwrap() {
            Relaxation::Feasible { objective, .. } => assert!(objective.abs() < 1e-7),
            other => panic!("{other:?}"),
        }
    }
}
