//! Line-oriented text form of a [`ConicProgram`].
//!
//! Numbers use 17 significant digits so an export followed by an import
//! reproduces the program bit for bit. See `docs/program-format.md`.

use std::fmt::Write as _;

use super::program::{BigMLink, ConicProgram, LinExpr, LinkTarget, Sense, VarKind, Variable};
use crate::error::{Error, Result};

const HEADER: &str = "FREQSEC-CONIC 1";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_expr(out: &mut String, e: &LinExpr) {
    let _ = write!(out, " {} {}", num(e.constant), e.terms.len());
    for &(i, c) in &e.terms {
        let _ = write!(out, " {i} {}", num(c));
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::invalid("name", format!("`{name}` must be non-empty and free of whitespace")));
    }
    Ok(())
}

/// Renders `program` in the text format.
pub fn export_program(program: &ConicProgram) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(
        out,
        "# {} variables, {} rows, {} cones, {} links",
        program.variables.len(),
        program.rows.len(),
        program.cones.len(),
        program.links.len()
    );
    for (i, v) in program.variables.iter().enumerate() {
        check_name(&v.name)?;
        let _ = match v.kind {
            VarKind::Continuous => writeln!(out, "VAR {i} {} {} {}", v.name, num(v.lo), num(v.hi)),
            VarKind::Integer => writeln!(out, "INT {i} {} {} {}", v.name, num(v.lo), num(v.hi)),
            VarKind::Binary => writeln!(out, "BIN {i} {} {} {}", v.name, num(v.lo), num(v.hi)),
        };
    }
    for row in &program.rows {
        check_name(&row.name)?;
        let sense = match row.sense {
            Sense::Le => "LE",
            Sense::Eq => "EQ",
        };
        let _ = write!(out, "LIN {} {sense}", row.name);
        write_expr(&mut out, &row.expr);
        out.push('\n');
    }
    for cone in &program.cones {
        check_name(&cone.name)?;
        let _ = write!(out, "RSOC {}", cone.name);
        for e in [&cone.u, &cone.v, &cone.w] {
            write_expr(&mut out, e);
        }
        out.push('\n');
    }
    for link in &program.links {
        let (kind, target) = match link.target {
            LinkTarget::Row(r) => ("ROW", r),
            LinkTarget::ConeU(c) => ("CONEU", c),
            LinkTarget::ConeV(c) => ("CONEV", c),
        };
        let _ = writeln!(out, "LINK {} {kind} {target} {}", link.binary, num(link.big_m));
    }
    for group in &program.selector_groups {
        let _ = write!(out, "SEL {}", group.len());
        for z in group {
            let _ = write!(out, " {z}");
        }
        out.push('\n');
    }
    out.push_str("OBJ");
    write_expr(&mut out, &program.objective);
    out.push('\n');
    Ok(out)
}

struct Tokens<'a> {
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Parse(format!("line {}: {msg}", self.line))
    }

    fn word(&mut self) -> Result<&'a str> {
        self.iter.next().ok_or_else(|| self.err("unexpected end of record"))
    }

    fn float(&mut self) -> Result<f64> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(format!("bad number `{w}`")))
    }

    fn index(&mut self) -> Result<usize> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(format!("bad index `{w}`")))
    }

    fn expr(&mut self) -> Result<LinExpr> {
        let constant = self.float()?;
        let k = self.index()?;
        let mut terms = Vec::with_capacity(k);
        for _ in 0..k {
            terms.push((self.index()?, self.float()?));
        }
        Ok(LinExpr { terms, constant })
    }

    fn finish(&mut self) -> Result<()> {
        match self.iter.next() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("trailing token `{w}`"))),
        }
    }
}

/// Parses the text format back into a program and validates it.
pub fn import_program(text: &str) -> Result<ConicProgram> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(Error::Parse(format!("missing `{HEADER}` header"))),
    }
    let mut p = ConicProgram::new();
    let mut objective = None;
    for (n, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut t = Tokens { line: n + 1, iter: line.split_whitespace() };
        match t.word()? {
            tag @ ("VAR" | "INT" | "BIN") => {
                let idx = t.index()?;
                if idx != p.variables.len() {
                    return Err(t.err(format!("variable index {idx} out of order")));
                }
                let name = t.word()?.to_string();
                let (lo, hi) = (t.float()?, t.float()?);
                let kind = match tag {
                    "VAR" => VarKind::Continuous,
                    "INT" => VarKind::Integer,
                    _ => VarKind::Binary,
                };
                p.variables.push(Variable { name, lo, hi, kind });
            }
            "LIN" => {
                let name = t.word()?;
                let sense = match t.word()? {
                    "LE" => Sense::Le,
                    "EQ" => Sense::Eq,
                    other => return Err(t.err(format!("unknown sense `{other}`"))),
                };
                let expr = t.expr()?;
                p.add_row(name, expr, sense);
            }
            "RSOC" => {
                let name = t.word()?;
                let (u, v, w) = (t.expr()?, t.expr()?, t.expr()?);
                p.add_cone(name, u, v, w);
            }
            "LINK" => {
                let binary = t.index()?;
                let kind = t.word()?;
                let target = t.index()?;
                let target = match kind {
                    "ROW" => LinkTarget::Row(target),
                    "CONEU" => LinkTarget::ConeU(target),
                    "CONEV" => LinkTarget::ConeV(target),
                    other => return Err(t.err(format!("unknown link target `{other}`"))),
                };
                let big_m = t.float()?;
                p.links.push(BigMLink { binary, target, big_m });
            }
            "SEL" => {
                let k = t.index()?;
                let group = (0..k).map(|_| t.index()).collect::<Result<Vec<_>>>()?;
                p.selector_groups.push(group);
            }
            "OBJ" => {
                if objective.is_some() {
                    return Err(t.err("duplicate OBJ record"));
                }
                objective = Some(t.expr()?);
            }
            other => return Err(t.err(format!("unknown record `{other}`"))),
        }
        t.finish()?;
    }
    p.objective = objective.ok_or_else(|| Error::Parse("missing OBJ record".into()))?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 0.1, f64::INFINITY);
        let y = p.add_continuous("y", -3.0, 1e6 / 7.0);
        let n = p.add_var("n", 0.0, 4.0, VarKind::Integer);
        let z0 = p.add_binary("z0");
        let z1 = p.add_binary("z1");
        let r = p.add_le("cap", LinExpr::var(x).term(y, 1.0 / 3.0).plus(-2.0));
        p.add_eq("pick", LinExpr::var(z0).term(z1, 1.0).plus(-1.0));
        let c = p.add_cone("k", LinExpr::var(x), LinExpr::constant(0.7), LinExpr::var(y).term(n, 0.1));
        p.add_link(z0, LinkTarget::Row(r), 12.5);
        p.add_link(z1, LinkTarget::ConeU(c), 3.0);
        p.selector_groups.push(vec![z0, z1]);
        p.objective = LinExpr::var(x).term(n, std::f64::consts::PI);
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample();
        let text = export_program(&p).unwrap();
        assert_eq!(import_program(&text).unwrap(), p);
        assert!(text.contains("LIN cap LE"));
        assert!(text.contains("RSOC k"));
        assert!(text.contains("BIN 3 z0"));
        assert!(text.contains("LINK 3 ROW 0"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(import_program("").is_err());
        assert!(import_program(&format!("{HEADER}\nFOO 1\nOBJ 0 0\n")).is_err());
        assert!(import_program(&format!("{HEADER}\nVAR 1 x 0 1\nOBJ 0 0\n")).is_err());
        assert!(import_program(&format!("{HEADER}\nVAR 0 x 0 1\n")).is_err());
        assert!(import_program(&format!("{HEADER}\nVAR 0 x 0 1 9\nOBJ 0 0\n")).is_err());
    }

    #[test]
    fn rejects_names_with_spaces() {
        let mut p = ConicProgram::new();
        p.add_continuous("a b", 0.0, 1.0);
        assert!(export_program(&p).is_err());
    }
}
