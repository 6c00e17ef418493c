//! Runs a command-line MILP solver on an LP-format file.
//!
//! Two solution-file layouts are understood:
//!
//! * `name value` pairs, with `#` comment lines (Gurobi `.sol` style);
//! * CBC style: a status header such as `Optimal - objective value 3`
//!   followed by `index name value reduced_cost` rows.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use crate::lp_format::write_lp;
use crate::model::Model;
use crate::solve::{ExternalSolver, Solution, SolveOptions, SolveStats, Status};
use crate::IlpError;

/// Solution file contents, before being matched against a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSolution {
    pub status: Status,
    pub values: Vec<(String, f64)>,
}

fn header_status(line: &str) -> Option<Status> {
    let l = line.to_ascii_lowercase();
    if l.contains("infeasible") {
        Some(Status::Infeasible)
    } else if l.starts_with("optimal") {
        Some(Status::Optimal)
    } else if l.starts_with("stopped") || l.contains("time limit") || l.contains("node limit") {
        Some(Status::Feasible)
    } else {
        None
    }
}

pub fn parse_solution(text: &str) -> Result<ParsedSolution, IlpError> {
    let mut status = Status::Optimal;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(s) = header_status(rest.trim()) {
                status = s;
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if values.is_empty() {
            if let Some(s) = header_status(line) {
                status = s;
                continue;
            }
        }
        let (name, val) = match toks.as_slice() {
            [name, val] => (*name, *val),
            [idx, name, val, _] if idx.parse::<usize>().is_ok() => (*name, *val),
            // CBC marks integer infeasibilities with a leading "**".
            ["**", idx, name, val, _] if idx.parse::<usize>().is_ok() => (*name, *val),
            _ => {
                return Err(IlpError::Parse { line: i + 1, message: format!("unrecognised solution row: {line}") })
            }
        };
        let v: f64 = val
            .parse()
            .map_err(|_| IlpError::Parse { line: i + 1, message: format!("bad value '{val}'") })?;
        values.push((name.to_string(), v));
    }
    if status.has_solution() && values.is_empty() && !text.trim().is_empty() {
        // A header with no rows only happens for models without variables.
        log::debug!("solution file has a status line but no values");
    }
    Ok(ParsedSolution { status, values })
}

fn substitute(arg: &str, lp: &Path, sol: &Path, opts: &SolveOptions) -> String {
    let time = opts.time_limit.map(|t| format!("{:.3}", t.as_secs_f64())).unwrap_or_else(|| "1e30".into());
    arg.replace("{lp}", &lp.to_string_lossy())
        .replace("{sol}", &sol.to_string_lossy())
        .replace("{time}", &time)
}

pub(crate) fn solve_external(model: &Model, ext: &ExternalSolver, opts: &SolveOptions) -> Result<Solution, IlpError> {
    let start = Instant::now();
    let tmp;
    let dir = match &ext.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let lp = dir.join(format!("{}.lp", sanitize(&model.name)));
    let sol = dir.join(format!("{}.sol", sanitize(&model.name)));
    let _ = std::fs::remove_file(&sol);
    std::fs::write(&lp, write_lp(model))?;

    let args: Vec<String> = ext.args.iter().map(|a| substitute(a, &lp, &sol, opts)).collect();
    let out = Command::new(&ext.executable).args(&args).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IlpError::SolverMissing { key: crate::solve::SOLVER_ENV.into(), path: Some(ext.executable.clone()) }
        } else {
            IlpError::Io(e)
        }
    })?;
    if !out.status.success() {
        return Err(IlpError::SolverFailed(format!(
            "{} exited with {}: {}",
            ext.executable.display(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let stats = |hit_limit| SolveStats { nodes: 0, elapsed: start.elapsed(), best_bound: None, hit_limit };
    let text = match std::fs::read_to_string(&sol) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            // Solvers such as Gurobi write no file for infeasible models.
            log::warn!("external solver wrote no solution file; treating model as infeasible");
            return Ok(Solution::without_assignment(Status::Infeasible, stats(false)));
        }
        Err(e) => return Err(e.into()),
    };
    let parsed = parse_solution(&text)?;
    if !parsed.status.has_solution() {
        return Ok(Solution::without_assignment(parsed.status, stats(parsed.status == Status::Timeout)));
    }
    let mut values = vec![0.0; model.num_vars()];
    for (name, v) in parsed.values {
        match model.lookup(&name) {
            Some(id) => values[id.index()] = v,
            None => return Err(IlpError::SolverFailed(format!("solution names unknown variable {name}"))),
        }
    }
    for (x, var) in values.iter_mut().zip(model.vars()) {
        if var.kind.is_integral() && (*x - x.round()).abs() < 1e-6 {
            *x = x.round();
        }
    }
    let objective = model.objective_value(&values);
    let mut st = stats(parsed.status == Status::Feasible);
    if parsed.status == Status::Optimal {
        st.best_bound = Some(objective);
    }
    Ok(Solution { status: parsed.status, values, objective, stats: st })
}

fn sanitize(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gurobi_style() {
        let p = parse_solution("# Objective value = 3\nx 1\ny 2\n").unwrap();
        assert_eq!(p.status, Status::Optimal);
        assert_eq!(p.values, vec![("x".into(), 1.0), ("y".into(), 2.0)]);
    }

    #[test]
    fn cbc_style() {
        let p = parse_solution("Optimal - objective value 3.00000000\n      0 x 1 0\n      1 y 2 1\n").unwrap();
        assert_eq!(p.status, Status::Optimal);
        assert_eq!(p.values.len(), 2);
        let p = parse_solution("Infeasible - objective value 0\n").unwrap();
        assert_eq!(p.status, Status::Infeasible);
        let p = parse_solution("Stopped on time - objective value 4\n 0 x 1 0\n").unwrap();
        assert_eq!(p.status, Status::Feasible);
    }

    #[test]
    fn garbage_row_is_an_error() {
        assert!(matches!(parse_solution("x 1 2\n"), Err(IlpError::Parse { line: 1, .. })));
    }
}
