//! Solver-facing mixed-integer rotated-SOC model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    /// Integer restricted to {0, 1}.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub kind: VarKind,
}

impl Variable {
    pub fn is_integer(&self) -> bool {
        self.kind != VarKind::Continuous
    }
}

/// `constant + Σ coef·x[var]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: value }
    }

    pub fn var(var: usize) -> Self {
        LinExpr { terms: vec![(var, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, var: usize, coef: f64) -> Self {
        self.add_term(var, coef);
        self
    }

    pub fn plus(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    /// Adds `coef·x[var]`, merging with an existing term; zero coefficients are dropped.
    pub fn add_term(&mut self, var: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(v, _)| *v == var) {
            Some((_, c)) => *c += coef,
            None => self.terms.push((var, coef)),
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, scale * c);
        }
        self.constant += scale * other.constant;
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::constant(0.0);
        out.add_expr(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Range of the expression over the variable box.
    pub fn range(&self, variables: &[Variable]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for &(v, c) in &self.terms {
            let var = &variables[v];
            if c >= 0.0 {
                lo += c * var.lo;
                hi += c * var.hi;
            } else {
                lo += c * var.hi;
                hi += c * var.lo;
            }
        }
        (lo, hi)
    }

    /// Magnitude used to scale feasibility tolerances.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| (c * x[v]).abs()).fold(self.constant.abs(), f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `expr ≤ 0`
    Le,
    /// `expr = 0`
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
}

/// `u·v ≥ w²`, `u ≥ 0`, `v ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsocBlock {
    pub name: String,
    pub u: LinExpr,
    pub v: LinExpr,
    pub w: LinExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkTarget {
    /// Row `expr ≤ 0` becomes `expr ≤ M·(1 − z)`.
    Row(usize),
    /// Cone side `u` becomes `u + M·(1 − z)`.
    ConeU(usize),
    /// Cone side `v` becomes `v + M·(1 − z)`.
    ConeV(usize),
}

/// Deactivates `target` when `binary` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigMLink {
    pub binary: usize,
    pub target: LinkTarget,
    pub big_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    pub variables: Vec<Variable>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<RsocBlock>,
    pub links: Vec<BigMLink>,
    /// Minimised.
    pub objective: LinExpr,
    /// Nadir-interval selectors, one group per frequency-security block,
    /// each group summing to one.
    pub selector_groups: Vec<Vec<usize>>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, kind: VarKind) -> usize {
        let (lo, hi) = match kind {
            VarKind::Binary => (lo.max(0.0), hi.min(1.0)),
            _ => (lo, hi),
        };
        self.variables.push(Variable { name: name.into(), lo, hi, kind });
        self.variables.len() - 1
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        self.add_var(name, lo, hi, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn add_row(&mut self, name: impl Into<String>, expr: LinExpr, sense: Sense) -> usize {
        self.rows.push(LinearRow { name: name.into(), expr, sense });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, name: impl Into<String>, expr: LinExpr) -> usize {
        self.add_row(name, expr, Sense::Le)
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: LinExpr) -> usize {
        self.add_row(name, expr, Sense::Eq)
    }

    pub fn add_cone(&mut self, name: impl Into<String>, u: LinExpr, v: LinExpr, w: LinExpr) -> usize {
        self.cones.push(RsocBlock { name: name.into(), u, v, w });
        self.cones.len() - 1
    }

    pub fn add_link(&mut self, binary: usize, target: LinkTarget, big_m: f64) {
        self.links.push(BigMLink { binary, target, big_m });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn binaries(&self) -> Vec<usize> {
        self.indices_of(|v| v.kind == VarKind::Binary)
    }

    pub fn integers(&self) -> Vec<usize> {
        self.indices_of(Variable::is_integer)
    }

    fn indices_of(&self, pred: impl Fn(&Variable) -> bool) -> Vec<usize> {
        self.variables.iter().enumerate().filter(|(_, v)| pred(v)).map(|(i, _)| i).collect()
    }

    /// Finite `M` no smaller than what is needed to relax `target` over the variable box.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lo.is_nan() || v.hi.is_nan() || v.lo == f64::INFINITY || v.hi == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("variable {}", v.name), "invalid bounds"));
            }
        }
        let check_expr = |e: &LinExpr, what: &str| -> Result<()> {
            if e.terms.iter().any(|&(v, c)| v >= n || !c.is_finite()) || !e.constant.is_finite() {
                return Err(Error::invalid(what.to_string(), "bad term in expression"));
            }
            Ok(())
        };
        for r in &self.rows {
            check_expr(&r.expr, &r.name)?;
        }
        for c in &self.cones {
            check_expr(&c.u, &c.name)?;
            check_expr(&c.v, &c.name)?;
            check_expr(&c.w, &c.name)?;
        }
        check_expr(&self.objective, "objective")?;
        for l in &self.links {
            if l.binary >= n || self.variables[l.binary].kind != VarKind::Binary {
                return Err(Error::invalid("links", "link references a non-binary variable"));
            }
            if !(l.big_m.is_finite() && l.big_m >= 0.0) {
                return Err(Error::invalid(
                    "links",
                    format!("big-M {} is not finite and non-negative", l.big_m),
                ));
            }
            match l.target {
                LinkTarget::Row(r) if r >= self.rows.len() || self.rows[r].sense != Sense::Le => {
                    return Err(Error::invalid("links", "link target must be an inequality row"));
                }
                LinkTarget::ConeU(c) | LinkTarget::ConeV(c) if c >= self.cones.len() => {
                    return Err(Error::invalid("links", "link target cone out of range"));
                }
                _ => {}
            }
        }
        for group in &self.selector_groups {
            if group.iter().any(|&v| v >= n || self.variables[v].kind != VarKind::Binary) {
                return Err(Error::invalid("selector_groups", "selectors must be binaries"));
            }
        }
        Ok(())
    }

    /// Objective value at `x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Gated row expression at `x`: `expr − M·(1 − z)` for each link.
    fn gated_row(&self, row: usize, x: &[f64]) -> f64 {
        let mut value = self.rows[row].expr.eval(x);
        for l in &self.links {
            if l.target == LinkTarget::Row(row) {
                value -= l.big_m * (1.0 - x[l.binary]);
            }
        }
        value
    }

    fn gated_cone(&self, cone: usize, x: &[f64]) -> (f64, f64, f64) {
        let c = &self.cones[cone];
        let (mut u, mut v) = (c.u.eval(x), c.v.eval(x));
        for l in &self.links {
            match l.target {
                LinkTarget::ConeU(k) if k == cone => u += l.big_m * (1.0 - x[l.binary]),
                LinkTarget::ConeV(k) if k == cone => v += l.big_m * (1.0 - x[l.binary]),
                _ => {}
            }
        }
        (u, v, c.w.eval(x))
    }

    /// Largest scaled constraint violation at `x` (bounds, integrality, rows, cones).
    ///
    /// Each violation is divided by `max(1, magnitude of the terms involved)`,
    /// so the result reads as a relative error.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &value) in self.variables.iter().zip(x) {
            let scale = value.abs().max(1.0);
            worst = worst.max((v.lo - value) / scale).max((value - v.hi) / scale);
            if v.is_integer() {
                worst = worst.max((value - value.round()).abs());
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            let value = self.gated_row(i, x);
            let scale = r.expr.magnitude(x).max(1.0);
            let viol = match r.sense {
                Sense::Le => value,
                Sense::Eq => value.abs(),
            };
            worst = worst.max(viol / scale);
        }
        for i in 0..self.cones.len() {
            let (u, v, w) = self.gated_cone(i, x);
            let scale = u.abs().max(v.abs()).max(w.abs()).max(1.0);
            worst = worst.max(-u / scale).max(-v / scale);
            // (u+v) ≥ ‖(2w, u−v)‖ is the well-conditioned form of uv ≥ w²
            let cone_gap = (4.0 * w * w + (u - v) * (u - v)).sqrt() - (u + v);
            worst = worst.max(cone_gap / (2.0 * scale));
        }
        worst
    }

    /// Interval chosen by each selector group at `x` (largest selector value).
    pub fn active_intervals(&self, x: &[f64]) -> Vec<usize> {
        self.selector_groups
            .iter()
            .map(|group| {
                group
                    .iter()
                    .enumerate()
                    .max_by(|a, b| x[*a.1].total_cmp(&x[*b.1]).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_arithmetic() {
        let mut e = LinExpr::var(0).term(1, 2.0).plus(3.0);
        e.add_term(0, -1.0);
        assert_eq!(e.eval(&[10.0, 1.0]), 5.0);
        let vars = vec![
            Variable { name: "a".into(), lo: 0.0, hi: 1.0, kind: VarKind::Continuous },
            Variable { name: "b".into(), lo: -1.0, hi: 2.0, kind: VarKind::Continuous },
        ];
        assert_eq!(e.range(&vars), (1.0, 7.0));
        assert_eq!(e.scaled(-1.0).range(&vars), (-7.0, -1.0));
    }

    #[test]
    fn gating_relaxes_rows_and_cones() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 0.0, 10.0);
        let z = p.add_binary("z");
        let r = p.add_le("r", LinExpr::var(x).plus(-2.0));
        p.add_link(z, LinkTarget::Row(r), 8.0);
        let c = p.add_cone("c", LinExpr::constant(0.0), LinExpr::var(x), LinExpr::constant(3.0));
        p.add_link(z, LinkTarget::ConeU(c), 9.0);
        p.validate().unwrap();
        assert!(p.max_violation(&[10.0, 0.0]) <= 1e-12);
        assert!(p.max_violation(&[10.0, 1.0]) > 0.1);
        assert!(p.max_violation(&[1.0, 0.0]) <= 1e-12);
        assert!(p.max_violation(&[1.0, 0.5]) > 0.1, "fractional binary");
    }

    #[test]
    fn rejects_links_on_equalities() {
        let mut p = ConicProgram::new();
        let z = p.add_binary("z");
        let r = p.add_eq("r", LinExpr::var(z));
        p.add_link(z, LinkTarget::Row(r), 1.0);
        assert!(p.validate().is_err());
    }
}
