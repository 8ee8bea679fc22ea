//! Human-readable dump of a conic program and its inverse parser.
//!
//! The format is line-based and unstable; it exists for debugging and for
//! round-trip checks. Coefficients are printed with shortest-round-trip
//! float formatting, so dump → parse reproduces the program exactly.

use thiserror::Error;

use super::{ConicProgram, LinExpr, VarId, VarShape};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {0}: {1}")]
    Line(usize, String),
    #[error("missing header line")]
    MissingHeader,
}

impl ConicProgram {
    /// Renders the program in the debug text format.
    pub fn dump(&self) -> String {
        let mut out = String::from("conic v1 maximize\n");
        for v in &self.vars {
            match v.shape {
                VarShape::Scalar => out.push_str(&format!("var {} scalar\n", v.name)),
                VarShape::Vector(n) => out.push_str(&format!("var {} vector {n}\n", v.name)),
                VarShape::Symmetric(d) => {
                    out.push_str(&format!("var {} symmetric {d}\n", v.name))
                }
            }
        }
        out.push_str(&format!("obj {}\n", self.fmt_expr(&self.objective)));
        for e in &self.eqs {
            out.push_str(&format!("eq {}\n", self.fmt_expr(e)));
        }
        for e in &self.leqs {
            out.push_str(&format!("leq {}\n", self.fmt_expr(e)));
        }
        for [x, y, z] in &self.exps {
            out.push_str(&format!(
                "exp {} ; {} ; {}\n",
                self.fmt_expr(x),
                self.fmt_expr(y),
                self.fmt_expr(z)
            ));
        }
        for &v in &self.psds {
            out.push_str(&format!("psd {}\n", self.vars[v.0].name));
        }
        out
    }

    fn fmt_expr(&self, e: &LinExpr) -> String {
        let mut parts = vec![format!("{:?}", e.constant)];
        for &(flat, coeff) in &e.terms {
            parts.push(format!("{:?}*{}", coeff, self.fmt_ref(flat)));
        }
        parts.join(" + ")
    }

    fn fmt_ref(&self, flat: usize) -> String {
        let decl = self
            .vars
            .iter()
            .rev()
            .find(|v| v.offset <= flat)
            .expect("flat index inside a variable");
        let local = flat - decl.offset;
        match decl.shape {
            VarShape::Scalar => decl.name.clone(),
            VarShape::Vector(_) => format!("{}[{}]", decl.name, local),
            VarShape::Symmetric(_) => {
                // invert the column-major upper-triangle index
                let mut j = 0usize;
                while (j + 1) * (j + 2) / 2 <= local {
                    j += 1;
                }
                let i = local - j * (j + 1) / 2;
                format!("{}[{},{}]", decl.name, i, j)
            }
        }
    }

    /// Parses the debug text format back into a program.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == "conic v1 maximize" => {}
            _ => return Err(ParseError::MissingHeader),
        }
        let mut prog = ConicProgram::new();
        for (idx, raw) in lines {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kw, rest) = line
                .split_once(' ')
                .ok_or_else(|| ParseError::Line(lineno, "missing arguments".into()))?;
            match kw {
                "var" => parse_var(&mut prog, rest, lineno)?,
                "obj" => {
                    let e = parse_expr(&prog, rest, lineno)?;
                    prog.set_objective(e);
                }
                "eq" => {
                    let e = parse_expr(&prog, rest, lineno)?;
                    prog.eq_zero(e);
                }
                "leq" => {
                    let e = parse_expr(&prog, rest, lineno)?;
                    prog.leq(e, LinExpr::constant(0.0));
                }
                "exp" => {
                    let parts: Vec<&str> = rest.split(';').collect();
                    if parts.len() != 3 {
                        return Err(ParseError::Line(lineno, "exp needs three expressions".into()));
                    }
                    let x = parse_expr(&prog, parts[0].trim(), lineno)?;
                    let y = parse_expr(&prog, parts[1].trim(), lineno)?;
                    let z = parse_expr(&prog, parts[2].trim(), lineno)?;
                    prog.exp_cone(x, y, z);
                }
                "psd" => {
                    let v = find_var(&prog, rest.trim(), lineno)?;
                    prog.psd(v);
                }
                other => {
                    return Err(ParseError::Line(lineno, format!("unknown keyword {other:?}")))
                }
            }
        }
        Ok(prog)
    }
}

fn parse_var(prog: &mut ConicProgram, rest: &str, lineno: usize) -> Result<(), ParseError> {
    let mut it = rest.split_whitespace();
    let name = it
        .next()
        .ok_or_else(|| ParseError::Line(lineno, "var needs a name".into()))?;
    let kind = it
        .next()
        .ok_or_else(|| ParseError::Line(lineno, "var needs a shape".into()))?;
    match kind {
        "scalar" => {
            prog.add_scalar(name);
        }
        "vector" | "symmetric" => {
            let dim: usize = it
                .next()
                .ok_or_else(|| ParseError::Line(lineno, "missing dimension".into()))?
                .parse()
                .map_err(|_| ParseError::Line(lineno, "bad dimension".into()))?;
            if kind == "vector" {
                prog.add_vector(name, dim);
            } else {
                prog.add_symmetric(name, dim);
            }
        }
        other => return Err(ParseError::Line(lineno, format!("unknown shape {other:?}"))),
    }
    Ok(())
}

fn find_var(prog: &ConicProgram, name: &str, lineno: usize) -> Result<VarId, ParseError> {
    prog.vars
        .iter()
        .position(|v| v.name == name)
        .map(VarId)
        .ok_or_else(|| ParseError::Line(lineno, format!("unknown variable {name:?}")))
}

fn parse_expr(prog: &ConicProgram, text: &str, lineno: usize) -> Result<LinExpr, ParseError> {
    let mut expr = LinExpr::default();
    for part in text.split(" + ") {
        let part = part.trim();
        if part.is_empty() {
            return Err(ParseError::Line(lineno, "empty term".into()));
        }
        match part.split_once('*') {
            None => {
                let c: f64 = part
                    .parse()
                    .map_err(|_| ParseError::Line(lineno, format!("bad constant {part:?}")))?;
                expr.constant += c;
            }
            Some((coeff, var_ref)) => {
                let c: f64 = coeff
                    .parse()
                    .map_err(|_| ParseError::Line(lineno, format!("bad coefficient {coeff:?}")))?;
                let flat = parse_ref(prog, var_ref.trim(), lineno)?;
                expr.terms.push((flat, c));
            }
        }
    }
    Ok(expr)
}

fn parse_ref(prog: &ConicProgram, text: &str, lineno: usize) -> Result<usize, ParseError> {
    let (name, index) = match text.split_once('[') {
        None => (text, None),
        Some((n, rest)) => {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError::Line(lineno, format!("unclosed index in {text:?}")))?;
            (n, Some(inner))
        }
    };
    let v = find_var(prog, name, lineno)?;
    let shape = prog.shape(v);
    let bad = |msg: &str| ParseError::Line(lineno, format!("{msg} in {text:?}"));
    match (shape, index) {
        (VarShape::Scalar, None) => Ok(prog.flat_index(v, 0)),
        (VarShape::Vector(n), Some(i)) => {
            let i: usize = i.parse().map_err(|_| bad("bad index"))?;
            if i >= n {
                return Err(bad("index out of range"));
            }
            Ok(prog.flat_index(v, i))
        }
        (VarShape::Symmetric(d), Some(ij)) => {
            let (i, j) = ij.split_once(',').ok_or_else(|| bad("need i,j"))?;
            let i: usize = i.trim().parse().map_err(|_| bad("bad row"))?;
            let j: usize = j.trim().parse().map_err(|_| bad("bad column"))?;
            if i >= d || j >= d {
                return Err(bad("index out of range"));
            }
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            Ok(prog.flat_index(v, c * (c + 1) / 2 + r))
        }
        _ => Err(bad("shape/index mismatch")),
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::super::*;
    use proptest::prelude::*;

    fn sample_program() -> ConicProgram {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x");
        let w = p.add_vector("w", 3);
        let q = p.add_symmetric("Q", 2);
        let ex = p.term(x);
        let e0 = p.vec_term(w, 0);
        let e2 = p.vec_term(w, 2);
        let qd = p.mat_term(q, 1, 1);
        let qo = p.mat_term(q, 0, 1);
        p.set_objective(ex.clone() + e2.clone() * 0.125 + LinExpr::constant(-1.5));
        p.eq_zero(e0.clone() - ex.clone() * 2.0);
        p.leq(e2 + qd, LinExpr::constant(4.0));
        p.add_log_epigraph(ex, e0, 0.5);
        p.eq_zero(qo - LinExpr::constant(0.3));
        p.psd(q);
        p
    }

    #[test]
    fn dump_parse_round_trip() {
        let p = sample_program();
        let text = p.dump();
        let q = ConicProgram::parse(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.dump());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "conic v1 maximize\nvar x scalar\nobj 1*y\n";
        match ConicProgram::parse(text) {
            Err(ParseError::Line(3, msg)) => assert!(msg.contains("unknown variable")),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_random_programs(
            coeffs in proptest::collection::vec(-1e6f64..1e6, 1..8),
            dims in (1usize..4, 1usize..4),
            consts in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let mut p = ConicProgram::new();
            let w = p.add_vector("w", dims.0);
            let q = p.add_symmetric("Q", dims.1);
            let mut obj = LinExpr::constant(consts[0]);
            for (i, c) in coeffs.iter().enumerate() {
                let e = if i % 2 == 0 {
                    p.vec_term(w, i % dims.0)
                } else {
                    p.mat_term(q, i % dims.1, (i / 2) % dims.1)
                };
                obj = obj + e * *c;
            }
            p.set_objective(obj.clone());
            p.leq(obj, LinExpr::constant(consts[1]));
            p.eq_zero(p.vec_term(w, 0) + LinExpr::constant(consts[2]));
            p.psd(q);
            let parsed = ConicProgram::parse(&p.dump()).unwrap();
            prop_assert_eq!(p, parsed);
        }
    }
}
