//! Reader and writer for the CPLEX-style LP text format.
//!
//! The writer emits `Minimize`/`Maximize`, `Subject To`, `Bounds`,
//! `Generals`, `Binaries` and `End` sections. Long expressions are wrapped
//! onto continuation lines that start with a space. The reader accepts the
//! writer's output and the common hand-written variants (`=<`, `=>`, `<`,
//! `>`, `free`, `-inf`/`+inf`, a leading sign glued to a coefficient).

use std::fmt::Write as _;

use crate::model::{LinExpr, Model, ObjSense, Sense, VarKind};
use crate::IlpError;

const WRAP: usize = 100;

pub fn write_lp(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ Model {}", model.name);
    let obj = model.objective();
    out.push_str(match obj.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(&wrap_line(&format!(" obj: {}", format_expr(model, &obj.expr))));
    out.push_str("Subject To\n");
    for c in model.constraints() {
        let line = format!(
            " {}: {} {} {}",
            c.name,
            format_expr(model, &c.expr),
            c.sense.symbol(),
            fmt_num(c.rhs)
        );
        out.push_str(&wrap_line(&line));
    }
    out.push_str("Bounds\n");
    for v in model.vars() {
        if v.kind == VarKind::Binary {
            continue;
        }
        let lo = v.lower;
        let hi = v.upper;
        let line = if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            format!(" {} free", v.name)
        } else if lo == hi {
            format!(" {} = {}", v.name, fmt_num(lo))
        } else if hi == f64::INFINITY {
            format!(" {} >= {}", v.name, fmt_num(lo))
        } else {
            format!(" {} <= {} <= {}", fmt_num(lo), v.name, fmt_num(hi))
        };
        out.push_str(&line);
        out.push('\n');
    }
    for (header, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
        let names: Vec<&str> = model
            .vars()
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.as_str())
            .collect();
        if names.is_empty() {
            continue;
        }
        out.push_str(header);
        out.push('\n');
        let mut line = String::new();
        for n in names {
            if line.len() + n.len() + 1 > WRAP {
                out.push_str(&line);
                out.push('\n');
                line.clear();
            }
            line.push(' ');
            line.push_str(n);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // `Display` for f64 is the shortest string that round-trips.
        format!("{x}")
    }
}

fn format_expr(model: &Model, expr: &LinExpr) -> String {
    if expr.is_empty() {
        // An empty row still needs a term; a zero coefficient keeps it inert.
        return match model.vars().first() {
            Some(v) => format!("0 {}", v.name),
            None => String::new(),
        };
    }
    let mut s = String::new();
    for (i, &(v, c)) in expr.terms().iter().enumerate() {
        let name = &model.var(v).name;
        let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
        if i == 0 {
            if sign == "-" {
                s.push_str("- ");
            }
        } else {
            s.push_str(sign);
            s.push(' ');
        }
        if mag != 1.0 {
            s.push_str(&fmt_num(mag));
            s.push(' ');
        }
        s.push_str(name);
        s.push(' ');
    }
    s.pop();
    s
}

fn wrap_line(line: &str) -> String {
    let mut out = String::new();
    let mut cur = String::new();
    for tok in line.split(' ') {
        if tok.is_empty() {
            continue;
        }
        if !cur.is_empty() && cur.len() + tok.len() + 1 > WRAP && tok != "+" && tok != "-" {
            // Never break between a sign and its coefficient/variable.
            out.push_str(&cur);
            out.push('\n');
            cur.clear();
        }
        cur.push(' ');
        cur.push_str(tok);
    }
    out.push_str(&cur);
    out.push('\n');
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<(Section, Option<ObjSense>)> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "minimize" | "minimum" | "min" => (Section::Objective, Some(ObjSense::Minimize)),
        "maximize" | "maximum" | "max" => (Section::Objective, Some(ObjSense::Maximize)),
        "subject to" | "such that" | "st" | "s.t." | "st." => (Section::Constraints, None),
        "bounds" | "bound" => (Section::Bounds, None),
        "generals" | "general" | "gen" | "integers" => (Section::Generals, None),
        "binaries" | "binary" | "bin" => (Section::Binaries, None),
        "end" => (Section::End, None),
        _ => return None,
    })
}

struct Stmt {
    line_no: usize,
    text: String,
}

/// Parses an LP document into a [`Model`].
///
/// Variables are created in order of first appearance; bounds default to
/// `[0, +inf)` as in the format's convention.
pub fn parse_lp(text: &str) -> Result<Model, IlpError> {
    let mut model_name = String::from("lp");
    let mut section = Section::None;
    let mut obj_sense = ObjSense::Minimize;
    let mut obj_stmts: Vec<Stmt> = Vec::new();
    let mut con_stmts: Vec<Stmt> = Vec::new();
    let mut bound_lines: Vec<Stmt> = Vec::new();
    let mut generals: Vec<String> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let (content, comment) = match raw.find('\\') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            if let Some(rest) = c.trim().strip_prefix("Model ") {
                model_name = rest.trim().to_string();
            }
        }
        if content.trim().is_empty() {
            continue;
        }
        if let Some((s, sense)) = section_of(content) {
            section = s;
            if let Some(sense) = sense {
                obj_sense = sense;
            }
            continue;
        }
        let push = |stmts: &mut Vec<Stmt>, always_join: bool| {
            let named = split_name(content.trim()).0.is_some();
            match stmts.last_mut() {
                Some(last) if always_join || (!named && !is_complete(&last.text)) => {
                    last.text.push(' ');
                    last.text.push_str(content.trim());
                }
                _ => stmts.push(Stmt { line_no, text: content.trim().to_string() }),
            }
        };
        match section {
            Section::Objective => push(&mut obj_stmts, true),
            Section::Constraints => push(&mut con_stmts, false),
            Section::Bounds => bound_lines.push(Stmt { line_no, text: content.trim().to_string() }),
            Section::Generals => generals.extend(content.split_whitespace().map(String::from)),
            Section::Binaries => binaries.extend(content.split_whitespace().map(String::from)),
            Section::End => {}
            Section::None => {
                return Err(IlpError::Parse { line: line_no, message: format!("content outside any section: {}", raw.trim()) })
            }
        }
    }

    let mut model = Model::new(model_name);
    let mut builder = Builder { model: &mut model };

    let mut obj_expr = LinExpr::new();
    if !obj_stmts.is_empty() {
        let joined: Vec<String> = obj_stmts.iter().map(|s| s.text.clone()).collect();
        let text = joined.join(" ");
        let line = obj_stmts[0].line_no;
        let (_, body) = split_name(&text);
        obj_expr = builder.parse_expr(body, line)?;
    }

    let mut constraints = Vec::new();
    for st in &con_stmts {
        let (name, body) = split_name(&st.text);
        let (lhs, sense, rhs) = split_sense(body).ok_or_else(|| IlpError::Parse {
            line: st.line_no,
            message: format!("constraint without comparison operator: {}", st.text),
        })?;
        let expr = builder.parse_expr(lhs, st.line_no)?;
        let rhs = parse_num(rhs.trim()).ok_or_else(|| IlpError::Parse {
            line: st.line_no,
            message: format!("bad right-hand side '{}'", rhs.trim()),
        })?;
        constraints.push((name.unwrap_or_default(), expr, sense, rhs));
    }

    let mut bounds: Vec<(String, f64, f64, usize)> = Vec::new();
    for st in &bound_lines {
        bounds.push(parse_bound(&st.text, st.line_no)?);
    }
    for (name, ..) in &bounds {
        builder.var(name);
    }
    for n in generals.iter().chain(binaries.iter()) {
        builder.var(n);
    }

    for (name, expr, sense, rhs) in constraints {
        model.add_constraint(name, expr, sense, rhs)?;
    }
    model.set_objective(obj_sense, obj_expr)?;

    for (name, lo, hi, line) in bounds {
        let id = model.lookup(&name).ok_or_else(|| IlpError::Parse { line, message: format!("unknown variable {name}") })?;
        let cur = model.var(id).clone();
        let lo = if lo.is_nan() { cur.lower } else { lo };
        let hi = if hi.is_nan() { cur.upper } else { hi };
        model.set_bounds(id, lo, hi);
    }
    let mut kinds = vec![VarKind::Continuous; model.num_vars()];
    for n in &generals {
        kinds[model.lookup(n).unwrap().index()] = VarKind::Integer;
    }
    for n in &binaries {
        kinds[model.lookup(n).unwrap().index()] = VarKind::Binary;
    }
    Ok(rebuild_with_kinds(model, &kinds))
}

fn rebuild_with_kinds(model: Model, kinds: &[VarKind]) -> Model {
    let mut out = Model::new(model.name.clone());
    for (v, &k) in model.vars().iter().zip(kinds) {
        let (lo, hi) = if k == VarKind::Binary { (0.0, 1.0) } else { (v.lower, v.upper) };
        out.add_var(v.name.clone(), k, lo, hi).expect("names already validated");
    }
    for c in model.constraints() {
        out.add_constraint(c.name.clone(), c.expr.clone(), c.sense, c.rhs)
            .expect("constraints already validated");
    }
    out.set_objective(model.objective().sense, model.objective().expr.clone())
        .expect("objective already validated");
    out
}

struct Builder<'a> {
    model: &'a mut Model,
}

impl Builder<'_> {
    fn var(&mut self, name: &str) -> crate::VarId {
        match self.model.lookup(name) {
            Some(v) => v,
            None => self
                .model
                .add_var(name, VarKind::Continuous, 0.0, f64::INFINITY)
                .unwrap_or_else(|_| panic!("invalid variable name {name}")),
        }
    }

    fn parse_expr(&mut self, text: &str, line: usize) -> Result<LinExpr, IlpError> {
        let mut expr = LinExpr::new();
        let mut sign = 1.0;
        let mut coeff: Option<f64> = None;
        for tok in tokenize(text) {
            match tok.as_str() {
                "+" => {}
                "-" => sign = -sign,
                _ => {
                    if let Some(n) = parse_num(&tok) {
                        coeff = Some(coeff.unwrap_or(1.0) * n);
                    } else {
                        // A coefficient may be glued to its variable: "2y".
                        let split = tok.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(0);
                        let (num, name) = tok.split_at(split);
                        if let Some(n) = parse_num(num) {
                            coeff = Some(coeff.unwrap_or(1.0) * n);
                        }
                        if crate::model::validate_name(name).is_err() {
                            return Err(IlpError::Parse { line, message: format!("unexpected token '{tok}'") });
                        }
                        let v = self.var(name);
                        expr.add(v, sign * coeff.unwrap_or(1.0));
                        sign = 1.0;
                        coeff = None;
                    }
                }
            }
        }
        if coeff.is_some() {
            // A bare constant in the objective/row: LP format allows it but we
            // have nowhere to put it.
            return Err(IlpError::Parse { line, message: "constant term in expression".into() });
        }
        Ok(expr)
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    for word in text.split_whitespace() {
        // split a glued leading sign: "-2" stays a number, "+x" -> "+", "x"
        let mut w = word;
        while let Some(first) = w.chars().next() {
            if (first == '+' || first == '-') && w.len() > 1 && parse_num(w).is_none() {
                toks.push(first.to_string());
                w = &w[1..];
            } else {
                break;
            }
        }
        toks.push(w.to_string());
    }
    toks
}

fn is_complete(text: &str) -> bool {
    // A row is complete once it has an operator followed by a value.
    split_sense(text).is_some_and(|(_, _, rhs)| !rhs.trim().is_empty())
}

fn split_name(text: &str) -> (Option<String>, &str) {
    if let Some(p) = text.find(':') {
        let name = text[..p].trim();
        if !name.is_empty() && !name.contains(char::is_whitespace) {
            return (Some(name.to_string()), &text[p + 1..]);
        }
    }
    (None, text)
}

fn split_sense(text: &str) -> Option<(&str, Sense, &str)> {
    let ops: [(&str, Sense); 7] = [
        ("<=", Sense::Le),
        ("=<", Sense::Le),
        (">=", Sense::Ge),
        ("=>", Sense::Ge),
        ("<", Sense::Le),
        (">", Sense::Ge),
        ("=", Sense::Eq),
    ];
    let mut best: Option<(usize, usize, Sense)> = None;
    for (op, s) in ops {
        if let Some(p) = text.find(op) {
            if best.is_none_or(|(bp, bl, _)| p < bp || (p == bp && op.len() > bl)) {
                best = Some((p, op.len(), s));
            }
        }
    }
    best.map(|(p, l, s)| (&text[..p], s, &text[p + l..]))
}

fn parse_num(tok: &str) -> Option<f64> {
    let t = tok.to_ascii_lowercase();
    match t.as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => return Some(f64::INFINITY),
        "-inf" | "-infinity" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    if t.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == '+') {
        t.parse::<f64>().ok()
    } else {
        None
    }
}

/// Returns (var, lower, upper, line); NaN means "leave unchanged".
fn parse_bound(text: &str, line: usize) -> Result<(String, f64, f64, usize), IlpError> {
    let err = || IlpError::Parse { line, message: format!("bad bound '{text}'") };
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        [v, f] if f.eq_ignore_ascii_case("free") => Ok((v.to_string(), f64::NEG_INFINITY, f64::INFINITY, line)),
        [a, op1, v, op2, b] => {
            let lo = parse_num(a).ok_or_else(err)?;
            let hi = parse_num(b).ok_or_else(err)?;
            match (*op1, *op2) {
                ("<=" | "=<" | "<", "<=" | "=<" | "<") => Ok((v.to_string(), lo, hi, line)),
                (">=" | "=>" | ">", ">=" | "=>" | ">") => Ok((v.to_string(), hi, lo, line)),
                _ => Err(err()),
            }
        }
        [a, op, b] => {
            let (var, num, flipped) = match parse_num(a) {
                Some(n) => (b.to_string(), n, true),
                None => (a.to_string(), parse_num(b).ok_or_else(err)?, false),
            };
            let sense = match *op {
                "<=" | "=<" | "<" => Sense::Le,
                ">=" | "=>" | ">" => Sense::Ge,
                "=" => Sense::Eq,
                _ => return Err(err()),
            };
            let sense = match (sense, flipped) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            Ok(match sense {
                Sense::Le => (var, f64::NAN, num, line),
                Sense::Ge => (var, num, f64::NAN, line),
                Sense::Eq => (var, num, num, line),
            })
        }
        _ => Err(err()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_for_tiny_model() {
        let mut m = Model::new("tiny");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
        m.add_constraint("lo", LinExpr::new().term(x, 1.0), Sense::Ge, 2.0).unwrap();
        m.set_objective(ObjSense::Minimize, LinExpr::new().term(x, 1.0)).unwrap();
        let text = write_lp(&m);
        assert!(text.contains("Minimize"));
        assert!(text.contains("x >= 2"));
        assert!(text.contains("Subject To"));
        assert!(text.trim_end().ends_with("End"));
    }

    #[test]
    fn binaries_section_lists_every_binary() {
        let mut m = Model::new("bin");
        let mut e = LinExpr::new();
        for u in 0..3 {
            for v in 0..3 {
                let z = m.add_binary(format!("z_{u}_{v}")).unwrap();
                e.add(z, (u * 3 + v) as f64);
            }
        }
        m.set_objective(ObjSense::Minimize, e).unwrap();
        let text = write_lp(&m);
        let bin = text.split("Binaries").nth(1).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                assert!(bin.contains(&format!("z_{u}_{v}")));
            }
        }
    }

    #[test]
    fn parses_hand_written_variants() {
        let text = "\\ Model hand\nMaximize\n obj: 3 x + 2y\nSubject To\n c1: x + y =< 4\n c2: -x + y >= -2\n c3: x - 3 y = 0\nBounds\n x <= 10\n -inf <= y <= 5\nGenerals\n x\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.name, "hand");
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.num_constraints(), 3);
        let x = m.lookup("x").unwrap();
        let y = m.lookup("y").unwrap();
        assert_eq!(m.var(x).kind, VarKind::Integer);
        assert_eq!(m.var(y).lower, f64::NEG_INFINITY);
        assert_eq!(m.var(x).upper, 10.0);
        assert_eq!(m.objective().sense, ObjSense::Maximize);
        assert_eq!(m.constraints()[1].expr.terms(), &[(x, -1.0), (y, 1.0)]);
    }

    #[test]
    fn parse_error_names_line() {
        let text = "Minimize\n obj: x\nSubject To\n c1: x + y 4\nEnd\n";
        match parse_lp(text) {
            Err(IlpError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn long_rows_wrap_and_reparse() {
        let mut m = Model::new("wide");
        let mut e = LinExpr::new();
        for i in 0..80 {
            let v = m.add_var(format!("long_variable_name_{i}"), VarKind::Integer, 0.0, 7.0).unwrap();
            e.add(v, if i % 3 == 0 { -1.5 } else { 2.0 });
        }
        m.add_constraint("row", e, Sense::Le, 12.25).unwrap();
        let text = write_lp(&m);
        assert!(text.lines().all(|l| l.len() <= WRAP + 40));
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.constraints()[0], m.constraints()[0]);
    }
}
