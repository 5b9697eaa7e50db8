//! Budgeted-uncertainty robust counterparts.
//!
//! Each uncertain row `Σ ã_j x_j ≤ b` with `ã_j ∈ [a_j − â_j, a_j + â_j]`
//! and budget Γ becomes
//! `Σ a_j x_j + Γλ + Σ μ_j ≤ b`, `λ + μ_j ≥ â_j |x_j|`, `λ, μ ≥ 0`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::builders::{ModelArtifacts, TagFamily};
use crate::error::{Error, Result};
use crate::milp::{LinExpr, MilpSolver, Relation, SolveStatus, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainRow {
    /// Tag label of the row.
    pub row: String,
    /// `(variable name, deviation â)` pairs.
    pub entries: Vec<(String, f64)>,
    /// Budget Γ for this row; falls back to the spec-wide value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub rows: Vec<UncertainRow>,
}

impl UncertaintySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn gamma_of(&self, row: &UncertainRow) -> Result<f64> {
        row.gamma
            .or(self.gamma)
            .ok_or_else(|| Error::Robust(format!("row {} has no budget gamma", row.row)))
    }

    /// Same spec with every budget replaced by `gamma`, clipped to the row's
    /// number of uncertain coefficients.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        out.gamma = Some(gamma);
        for r in &mut out.rows {
            r.gamma = Some(gamma.min(r.entries.len() as f64));
        }
        out
    }

    /// Same spec with each budget at `fraction` of its row's coefficient count.
    pub fn with_gamma_fraction(&self, fraction: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.gamma = Some(fraction * r.entries.len() as f64);
        }
        out
    }
}

struct ResolvedRow {
    index: usize,
    label: String,
    entries: Vec<(VarId, f64)>,
    gamma: f64,
}

fn resolve(art: &ModelArtifacts, spec: &UncertaintySpec) -> Result<Vec<ResolvedRow>> {
    let mut out = Vec::new();
    for r in &spec.rows {
        let index = art.row_index(&r.row).ok_or_else(|| Error::Robust(format!("unknown row `{}`", r.row)))?;
        if out.iter().any(|o: &ResolvedRow| o.index == index) {
            return Err(Error::Robust(format!("row `{}` listed twice", r.row)));
        }
        let mut entries = Vec::with_capacity(r.entries.len());
        for (name, dev) in &r.entries {
            let id = art.model.var_by_name(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if !dev.is_finite() || *dev < 0.0 {
                return Err(Error::Robust(format!("row `{}`: deviation of {name} must be finite and >= 0", r.row)));
            }
            if entries.iter().any(|&(v, _)| v == id) {
                return Err(Error::Robust(format!("row `{}`: {name} listed twice", r.row)));
            }
            entries.push((id, *dev));
        }
        let gamma = spec.gamma_of(r)?;
        if !(0.0..=entries.len() as f64).contains(&gamma) {
            return Err(Error::Robust(format!(
                "row `{}`: gamma {gamma} outside [0, {}]",
                r.row,
                entries.len()
            )));
        }
        if art.model.rows[index].relation == Relation::Eq && !entries.is_empty() {
            return Err(Error::Robust(format!(
                "row `{}` is an equality; rewrite it as two inequalities before marking coefficients uncertain",
                r.row
            )));
        }
        out.push(ResolvedRow { index, label: r.row.clone(), entries, gamma });
    }
    Ok(out)
}

/// Robust counterpart of `art` under `spec`. `≥` rows are negated into `≤`
/// form first; equality rows with uncertain coefficients are rejected.
pub fn robustify(art: &ModelArtifacts, spec: &UncertaintySpec) -> Result<ModelArtifacts> {
    let rows = resolve(art, spec)?;
    let mut out = art.clone();
    out.model.name = format!("{}-robust", art.model.name);
    // |x| helpers for variables that can be negative, shared across rows.
    let mut abs_of: HashMap<usize, VarId> = HashMap::new();

    for r in rows {
        let nominal = out.model.rows[r.index].clone();
        let (mut expr, rhs) = match nominal.relation {
            Relation::Le => (nominal.expr.clone(), nominal.rhs),
            Relation::Ge => (nominal.expr.scaled(-1.0), -nominal.rhs),
            Relation::Eq => unreachable!("rejected in resolve"),
        };
        let lambda = out.model.add_continuous(format!("rob_lambda[{}]", r.label), 0.0, f64::INFINITY);
        expr.add_term(lambda, r.gamma);
        for &(x, dev) in &r.entries {
            let name = out.model.var(x).name.clone();
            let mu = out.model.add_continuous(format!("rob_mu[{},{name}]", r.label), 0.0, f64::INFINITY);
            expr.add_term(mu, 1.0);

            let (lo, hi) = (out.model.var(x).lower, out.model.var(x).upper);
            let mut dual = LinExpr::term(lambda, 1.0);
            dual.add_term(mu, 1.0);
            if lo >= 0.0 {
                dual.add_term(x, -dev);
            } else if hi <= 0.0 {
                dual.add_term(x, dev);
            } else {
                let y = match abs_of.get(&x.0) {
                    Some(&y) => y,
                    None => {
                        let y = out.model.add_continuous(format!("rob_abs[{name}]"), 0.0, f64::INFINITY);
                        for sign in [1.0, -1.0] {
                            let mut e = LinExpr::term(y, 1.0);
                            e.add_term(x, -sign);
                            let label = format!("rob_abs[{name},{}]", if sign > 0.0 { "+" } else { "-" });
                            out.push_row(TagFamily::RobustDual, label, e, Relation::Ge, 0.0);
                        }
                        abs_of.insert(x.0, y);
                        y
                    }
                };
                dual.add_term(y, -dev);
            }
            out.push_row(TagFamily::RobustDual, format!("rob_dual[{},{name}]", r.label), dual, Relation::Ge, 0.0);
        }
        let row = &mut out.model.rows[r.index];
        let normalized = expr.normalized();
        row.expr = normalized;
        row.relation = Relation::Le;
        row.rhs = rhs;
    }
    Ok(out)
}

/// Every uncertain coefficient moved to its bound in the tightening
/// direction. Needs each uncertain variable to be sign-definite.
pub fn worst_case(art: &ModelArtifacts, spec: &UncertaintySpec) -> Result<ModelArtifacts> {
    let rows = resolve(art, &spec.with_gamma_fraction(0.0))?;
    let mut out = art.clone();
    out.model.name = format!("{}-worst-case", art.model.name);
    for r in rows {
        let sign_row = match out.model.rows[r.index].relation {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => unreachable!("rejected in resolve"),
        };
        let mut extra = LinExpr::new();
        for &(x, dev) in &r.entries {
            let v = out.model.var(x);
            let sign_x = if v.lower >= 0.0 {
                1.0
            } else if v.upper <= 0.0 {
                -1.0
            } else {
                return Err(Error::Robust(format!("{} is not sign-definite; worst case is not linear", v.name)));
            };
            extra.add_term(x, sign_row * sign_x * dev);
        }
        let row = &mut out.model.rows[r.index];
        let mut e = row.expr.clone();
        e += &extra;
        row.expr = e.normalized();
    }
    Ok(out)
}

/// Largest total deviation `Σ w_j η_j` with `Σ η_j ≤ Γ`, `0 ≤ η ≤ 1`, where
/// `w_j = â_j |x_j|`. Greedy on sorted weights with a fractional last unit.
pub fn protection_value_of(weights: &[f64], gamma: f64) -> f64 {
    let mut w: Vec<f64> = weights.iter().map(|v| v.abs()).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let mut budget = gamma.max(0.0);
    let mut total = 0.0;
    for v in w {
        if budget <= 0.0 {
            break;
        }
        let take = budget.min(1.0);
        total += take * v;
        budget -= take;
    }
    total
}

/// Protection value of one spec row at the point `values`.
pub fn protection_value(art: &ModelArtifacts, values: &[f64], spec: &UncertaintySpec, row: &str) -> Result<f64> {
    let r = spec
        .rows
        .iter()
        .find(|r| r.row == row)
        .ok_or_else(|| Error::Robust(format!("row `{row}` is not in the spec")))?;
    let mut weights = Vec::with_capacity(r.entries.len());
    for (name, dev) in &r.entries {
        let id = art.model.var_by_name(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
        weights.push(dev * values[id.0].abs());
    }
    Ok(protection_value_of(&weights, spec.gamma_of(r)?))
}

/// Upper bound `1 − Φ((Γ − 1)/√n)` on the probability that a row with `n`
/// uncertain coefficients and budget Γ is violated.
pub fn violation_bound(gamma: f64, n: usize) -> f64 {
    let z = (gamma - 1.0) / (n.max(1) as f64).sqrt();
    let phi = Normal::standard();
    1.0 - phi.cdf(z)
}

/// Marks every coefficient of every declared capacity row as uncertain with
/// deviation `relative · |nominal|` (flows on one side, capacity on the open
/// indicator) and budget `gamma` clipped to the row size. Linking rows of
/// uncapacitated facilities are left out: their flows equal the bound by
/// construction, so any deviation would make them infeasible.
pub fn capacity_preset(art: &ModelArtifacts, relative: f64, gamma: f64) -> UncertaintySpec {
    let mut rows = Vec::new();
    for k in art.rows_in(TagFamily::Capacity) {
        let row = &art.model.rows[k];
        let entries: Vec<(String, f64)> = row
            .expr
            .terms
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|&(v, c)| (art.model.var(v).name.clone(), relative * c.abs()))
            .collect();
        if entries.is_empty() {
            continue;
        }
        let g = gamma.min(entries.len() as f64);
        rows.push(UncertainRow { row: art.tags[k].label.clone(), entries, gamma: Some(g) });
    }
    UncertaintySpec { gamma: Some(gamma), rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampPoint {
    /// Budget as a fraction of each row's coefficient count.
    pub fraction: f64,
    pub status: SolveStatus,
    pub objective: f64,
}

/// Solves the robust counterpart with budgets at `0, 1/steps, …, 1` of each
/// row's coefficient count.
pub fn gamma_ramp(
    art: &ModelArtifacts,
    spec: &UncertaintySpec,
    steps: usize,
    solver: &dyn MilpSolver,
) -> Result<Vec<RampPoint>> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|k| {
            let fraction = k as f64 / steps as f64;
            let rob = robustify(art, &spec.with_gamma_fraction(fraction))?;
            let s = solver.solve(&rob.model);
            Ok(RampPoint { fraction, status: s.status, objective: s.objective })
        })
        .collect()
}
