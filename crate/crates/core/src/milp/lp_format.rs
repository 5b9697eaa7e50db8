//! Plain-text dump in CPLEX LP format, for cross-checking with external solvers.

use std::fmt::Write;

use super::model::{LinExpr, MilpModel, Relation};

/// Characters the LP format does not accept inside names.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.()[],{}!\"#$%&/;?@'`|~".contains(c) { c } else { '_' })
        .collect()
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, model: &MilpModel, expr: &LinExpr) {
    if expr.terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(v, c)) in expr.terms.iter().enumerate() {
        let name = sanitize(&model.var(v).name);
        if c < 0.0 {
            let _ = write!(out, " - {} {}", fmt_num(-c), name);
        } else if k == 0 {
            let _ = write!(out, " {} {}", fmt_num(c), name);
        } else {
            let _ = write!(out, " + {} {}", fmt_num(c), name);
        }
    }
}

/// Writes `model` in LP format. When `comments` is given it must have one
/// entry per row; each is emitted as a `\` comment line above its row.
pub fn write_lp(model: &MilpModel, comments: Option<&[String]>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem: {}", model.name);
    out.push_str("Minimize\n obj:");
    write_expr(&mut out, model, &model.objective);
    if model.objective.constant != 0.0 {
        // LP format has no objective constant; record it for readers.
        let _ = write!(out, "\n\\ objective constant: {}", fmt_num(model.objective.constant));
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.rows.iter().enumerate() {
        if let Some(c) = comments.and_then(|c| c.get(i)) {
            let _ = writeln!(out, "\\ {c}");
        }
        let _ = write!(out, " r{}_{}:", i, sanitize(&row.name));
        write_expr(&mut out, model, &row.expr);
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.variables.iter().filter(|v| !v.is_binary()) {
        let name = sanitize(&v.name);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {name} = {}", fmt_num(v.lower));
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lower), fmt_num(v.upper));
            }
            (true, false) if v.lower == 0.0 => {}
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", fmt_num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", fmt_num(v.upper));
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    let binaries: Vec<String> = model.variables.iter().filter(|v| v.is_binary()).map(|v| sanitize(&v.name)).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {b}");
        }
    }
    out.push_str("End\n");
    out
}
