use std::collections::HashMap;
use std::fmt;

use crate::IlpError;

/// Index of a variable inside a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Higher values are branched on first.
    pub priority: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// Sparse linear expression. Repeated variables are merged on insertion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: VarId, coeff: f64) -> Self {
        self.add(var, coeff);
        self
    }

    pub fn add(&mut self, var: VarId, coeff: f64) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == var) {
            t.1 += coeff;
        } else {
            self.terms.push((var, coeff));
        }
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }
}

impl FromIterator<(VarId, f64)> for LinExpr {
    fn from_iter<I: IntoIterator<Item = (VarId, f64)>>(iter: I) -> Self {
        let mut e = LinExpr::new();
        for (v, c) in iter {
            e.add(v, c);
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Signed violation: positive when the constraint is broken.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub sense: ObjSense,
    pub expr: LinExpr,
}

/// A mixed-integer linear model.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
    by_name: HashMap<String, VarId>,
    constraint_names: HashMap<String, usize>,
}

/// A constraint or bound that a candidate assignment breaks.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub what: String,
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated by {:.3e}", self.what, self.amount)
    }
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model {
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective { sense: ObjSense::Minimize, expr: LinExpr::new() },
            by_name: HashMap::new(),
            constraint_names: HashMap::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, IlpError> {
        let name = name.into();
        validate_name(&name)?;
        if self.by_name.contains_key(&name) {
            return Err(IlpError::DuplicateName(name));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        if lower.is_nan() || upper.is_nan() {
            return Err(IlpError::InvalidBounds(name));
        }
        let id = VarId(self.vars.len());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable { name, kind, lower, upper, priority: 0 });
        Ok(id)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, IlpError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds a constraint. An empty name gets an automatic `c<index>` name.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, IlpError> {
        let mut name = name.into();
        if name.is_empty() {
            name = format!("c{}", self.constraints.len());
        }
        validate_name(&name)?;
        if self.constraint_names.contains_key(&name) {
            return Err(IlpError::DuplicateName(name));
        }
        for &(v, _) in expr.terms() {
            if v.0 >= self.vars.len() {
                return Err(IlpError::UnknownVariable(format!("#{}", v.0)));
            }
        }
        let idx = self.constraints.len();
        self.constraint_names.insert(name.clone(), idx);
        self.constraints.push(Constraint { name, expr, sense, rhs });
        Ok(idx)
    }

    pub fn set_objective(&mut self, sense: ObjSense, expr: LinExpr) -> Result<(), IlpError> {
        for &(v, _) in expr.terms() {
            if v.0 >= self.vars.len() {
                return Err(IlpError::UnknownVariable(format!("#{}", v.0)));
            }
        }
        self.objective = Objective { sense, expr };
        Ok(())
    }

    pub fn set_priority(&mut self, var: VarId, priority: i32) {
        self.vars[var.0].priority = priority;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.vars.len()).map(VarId)
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integral(&self) -> usize {
        self.vars.iter().filter(|v| v.kind.is_integral()).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.expr.eval(values)
    }

    /// True when every objective term is an integer coefficient on an
    /// integral variable, so any feasible objective value is an integer.
    pub fn objective_is_integral(&self) -> bool {
        self.objective.expr.terms().iter().all(|&(v, c)| {
            self.vars[v.0].kind.is_integral() && (c - c.round()).abs() < 1e-12
        })
    }

    /// Returns the worst violation of bounds, integrality or constraints, if
    /// any exceeds `tol`.
    pub fn check(&self, values: &[f64], tol: f64) -> Result<(), Violation> {
        if values.len() != self.vars.len() {
            return Err(Violation {
                what: format!("assignment length {} != {}", values.len(), self.vars.len()),
                amount: f64::INFINITY,
            });
        }
        let mut worst: Option<Violation> = None;
        let mut note = |what: String, amount: f64| {
            if amount > tol && worst.as_ref().is_none_or(|w| amount > w.amount) {
                worst = Some(Violation { what, amount });
            }
        };
        for (v, &x) in self.vars.iter().zip(values) {
            note(format!("lower bound of {}", v.name), v.lower - x);
            note(format!("upper bound of {}", v.name), x - v.upper);
            if v.kind.is_integral() {
                note(format!("integrality of {}", v.name), (x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            note(format!("constraint {}", c.name), c.violation(values));
        }
        match worst {
            Some(w) => Err(w),
            None => Ok(()),
        }
    }
}

pub(crate) fn validate_name(name: &str) -> Result<(), IlpError> {
    let ok = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "_[].#".contains(c));
    if ok {
        Ok(())
    } else {
        Err(IlpError::InvalidName(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_var_and_constraint() {
        let mut m = Model::new("t");
        let y = m.add_binary("y").unwrap();
        m.add_constraint("", LinExpr::new().term(y, 1.0), Sense::Le, 1.0).unwrap();
        assert_eq!(m.num_vars(), 1);
        assert_eq!(m.num_constraints(), 1);
        assert_eq!(m.constraints()[0].name, "c0");
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut m = Model::new("t");
        m.add_binary("y").unwrap();
        assert!(matches!(m.add_binary("y"), Err(IlpError::DuplicateName(_))));
        m.add_constraint("k", LinExpr::new(), Sense::Le, 0.0).unwrap();
        assert!(matches!(
            m.add_constraint("k", LinExpr::new(), Sense::Le, 0.0),
            Err(IlpError::DuplicateName(_))
        ));
    }

    #[test]
    fn unknown_variable_rejected() {
        let mut m = Model::new("t");
        let mut other = Model::new("o");
        other.add_binary("a").unwrap();
        let b = other.add_binary("b").unwrap();
        assert!(matches!(
            m.add_constraint("", LinExpr::new().term(b, 1.0), Sense::Le, 1.0),
            Err(IlpError::UnknownVariable(_))
        ));
    }

    #[test]
    fn merge_repeated_terms() {
        let mut m = Model::new("t");
        let x = m.add_var("x", VarKind::Continuous, 0.0, 1.0).unwrap();
        let e = LinExpr::new().term(x, 1.0).term(x, 2.0);
        assert_eq!(e.terms(), &[(x, 3.0)]);
    }

    #[test]
    fn check_reports_worst() {
        let mut m = Model::new("t");
        let x = m.add_var("x", VarKind::Integer, 0.0, 3.0).unwrap();
        m.add_constraint("lim", LinExpr::new().term(x, 1.0), Sense::Le, 1.0).unwrap();
        assert!(m.check(&[1.0], 1e-6).is_ok());
        let v = m.check(&[2.0], 1e-6).unwrap_err();
        assert_eq!(v.what, "constraint lim");
        assert!(m.check(&[0.5], 1e-6).unwrap_err().what.starts_with("integrality"));
    }
}
