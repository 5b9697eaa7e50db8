//! Mixed-binary linear program representation.
//!
//! Models are always minimizations. Variables carry explicit bounds, rows are
//! linear expressions compared against a right-hand side.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrality {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// JSON has no infinity; unbounded sides are written as `null`.
mod bound_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize_lower<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn deserialize_upper<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(serialize_with = "bound_serde::serialize", deserialize_with = "bound_serde::deserialize_lower")]
    pub lower: f64,
    #[serde(serialize_with = "bound_serde::serialize", deserialize_with = "bound_serde::deserialize_upper")]
    pub upper: f64,
    pub integrality: Integrality,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        self.integrality == Integrality::Binary
    }
}

/// Sparse linear expression `Σ coef·x + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self { terms: Vec::new(), constant: value }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self { terms: vec![(var, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    /// Adds `scale · other` to this expression.
    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, scale);
        out
    }

    /// Merges duplicate variables and orders terms by variable index.
    pub fn normalized(&self) -> LinExpr {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: merged.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>() + self.constant
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl std::ops::AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl std::ops::SubAssign<&LinExpr> for LinExpr {
    fn sub_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, -1.0);
    }
}

/// A constraint row. Any constant of the original expression has been moved
/// into `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub expr: LinExpr,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    /// Signed violation: positive when the row is violated by `values`.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.evaluate(values);
        match self.relation {
            Relation::Le => lhs - self.rhs,
            Relation::Ge => self.rhs - lhs,
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Magnitude used to scale feasibility tolerances for this row.
    pub fn scale(&self, values: &[f64]) -> f64 {
        self.expr
            .terms
            .iter()
            .map(|&(v, c)| (c * values[v.0]).abs())
            .fold(self.rhs.abs().max(1.0), f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub objective: LinExpr,
    pub rows: Vec<Row>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integrality: Integrality) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable { name: name.into(), lower, upper, integrality });
        id
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, Integrality::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, Integrality::Binary)
    }

    pub fn add_row(&mut self, name: impl Into<String>, expr: LinExpr, relation: Relation, rhs: f64) -> RowId {
        let expr = expr.normalized();
        let rhs = rhs - expr.constant;
        let id = RowId(self.rows.len());
        self.rows.push(Row {
            name: name.into(),
            expr: LinExpr { terms: expr.terms, constant: 0.0 },
            relation,
            rhs,
        });
        id
    }

    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = objective.normalized();
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables.iter().enumerate().filter(|(_, v)| v.is_binary()).map(|(i, _)| VarId(i))
    }

    /// Fixes a variable to a single value by collapsing its bounds.
    pub fn fix(&mut self, id: VarId, value: f64) {
        let v = &mut self.variables[id.0];
        v.lower = value;
        v.upper = value;
    }

    /// Same model with every binary treated as a continuous `[0,1]` variable.
    pub fn relaxed(&self) -> MilpModel {
        let mut out = self.clone();
        for v in &mut out.variables {
            v.integrality = Integrality::Continuous;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::InvalidModel(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
            if v.is_binary() && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::InvalidModel(format!("binary {} has bounds outside [0,1]", v.name)));
            }
        }
        let check_expr = |what: &str, e: &LinExpr| -> Result<()> {
            for &(v, c) in &e.terms {
                if v.0 >= n {
                    return Err(Error::InvalidModel(format!("{what} references undeclared variable #{}", v.0)));
                }
                if !c.is_finite() {
                    return Err(Error::InvalidModel(format!("{what} has non-finite coefficient")));
                }
            }
            Ok(())
        };
        check_expr("objective", &self.objective)?;
        for row in &self.rows {
            check_expr(&format!("row {}", row.name), &row.expr)?;
            if !row.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("row {} has non-finite right-hand side", row.name)));
            }
        }
        Ok(())
    }

    /// True when `values` satisfies every row and bound within `tol` (scaled
    /// per row) and binaries lie within `int_tol` of {0,1}.
    pub fn is_feasible(&self, values: &[f64], tol: f64, int_tol: f64) -> bool {
        if values.len() != self.variables.len() {
            return false;
        }
        let bounds_ok = self.variables.iter().zip(values).all(|(v, &x)| {
            let s = x.abs().max(1.0);
            x >= v.lower - tol * s
                && x <= v.upper + tol * s
                && (!v.is_binary() || x.abs() <= int_tol || (x - 1.0).abs() <= int_tol)
        });
        bounds_ok && self.rows.iter().all(|r| r.violation(values) <= tol * r.scale(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_row_moves_constant_and_merges_terms() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, f64::INFINITY);
        let mut e = LinExpr::term(x, 1.0);
        e.add_term(x, 2.0).add_constant(4.0);
        m.add_row("r", e, Relation::Le, 10.0);
        assert_eq!(m.rows[0].expr.terms, vec![(x, 3.0)]);
        assert_eq!(m.rows[0].rhs, 6.0);
    }

    #[test]
    fn validate_rejects_bad_binary_and_undeclared_vars() {
        let mut m = MilpModel::new("t");
        m.add_var("b", 0.0, 2.0, Integrality::Binary);
        assert!(m.validate().is_err());

        let mut m = MilpModel::new("t");
        m.add_continuous("x", 1.0, 0.0);
        assert!(m.validate().is_err());

        let mut m = MilpModel::new("t");
        m.add_continuous("x", 0.0, 1.0);
        m.add_row("r", LinExpr::term(VarId(3), 1.0), Relation::Le, 1.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn infinite_bounds_round_trip_through_json() {
        let mut m = MilpModel::new("t");
        m.add_continuous("free", f64::NEG_INFINITY, f64::INFINITY);
        let text = serde_json::to_string(&m).unwrap();
        let back: MilpModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
