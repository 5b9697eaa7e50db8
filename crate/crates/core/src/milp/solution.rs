use serde::{Deserialize, Serialize};

use super::model::{MilpModel, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node budget ran out; `values` holds the incumbent, if any.
    BudgetExceeded,
    NumericallyUnstable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub lp_iterations: usize,
    pub nodes: usize,
    /// Objective of the root LP relaxation.
    pub root_bound: Option<f64>,
    /// Best proven lower bound when the search stopped.
    pub best_bound: Option<f64>,
    /// Relative gap between incumbent and best bound.
    pub gap: Option<f64>,
    /// Objective of every new incumbent, in discovery order.
    pub incumbent_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl Solution {
    pub(crate) fn without_point(status: SolveStatus, stats: SolveStats) -> Self {
        Self { status, objective: f64::NAN, values: Vec::new(), stats }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn has_point(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    /// Named nonzero values, in variable order.
    pub fn nonzeros<'a>(&'a self, model: &'a MilpModel, tol: f64) -> impl Iterator<Item = (&'a str, f64)> + 'a {
        model
            .variables
            .iter()
            .zip(&self.values)
            .filter(move |(_, &x)| x.abs() > tol)
            .map(|(v, &x)| (v.name.as_str(), x))
    }
}
