//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::model::MilpModel;
use super::simplex::{solve_lp_bounded, LpOptions};
use super::solution::{SolveStats, SolveStatus, Solution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub node_budget: usize,
    pub integrality_tol: f64,
    pub lp: LpOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { node_budget: 200_000, integrality_tol: 1e-6, lp: LpOptions::default() }
    }
}

/// Boundary through which any exact MILP engine can be plugged in.
pub trait MilpSolver {
    fn solve(&self, model: &MilpModel) -> Solution;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BranchAndBound {
    pub options: MilpOptions,
}

impl BranchAndBound {
    pub fn new(options: MilpOptions) -> Self {
        Self { options }
    }
}

impl MilpSolver for BranchAndBound {
    fn solve(&self, model: &MilpModel) -> Solution {
        branch_and_bound(model, &self.options)
    }
}

pub fn solve_milp(model: &MilpModel) -> Solution {
    branch_and_bound(model, &MilpOptions::default())
}

struct Node {
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the smallest bound (then oldest id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn branch_and_bound(model: &MilpModel, options: &MilpOptions) -> Solution {
    let mut stats = SolveStats::default();
    let binaries: Vec<usize> = model.binaries().map(|v| v.0).collect();
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();

    let root = solve_lp_bounded(model, &lower, &upper, &options.lp);
    stats.lp_iterations += root.stats.lp_iterations;
    if root.status != SolveStatus::Optimal {
        return Solution::without_point(root.status, stats);
    }
    stats.root_bound = Some(root.objective);

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node { bound: root.objective, id: next_id, lower, upper, values: root.values });
    next_id += 1;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let prune_tol = |inc: f64| 1e-9 * inc.abs().max(1.0);

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - prune_tol(*inc) {
                // Best-first: every remaining node is at least as bad.
                heap.clear();
                break;
            }
        }
        if stats.nodes >= options.node_budget {
            heap.push(node);
            break;
        }
        stats.nodes += 1;

        let branch_var = most_fractional(&binaries, &node.values, options.integrality_tol);
        let Some(k) = branch_var else {
            let better = incumbent.as_ref().map_or(true, |(inc, _)| node.bound < *inc);
            if better {
                stats.incumbent_trace.push(node.bound);
                incumbent = Some((node.bound, node.values));
            }
            continue;
        };

        for value in [0.0, 1.0] {
            let mut lower = node.lower.clone();
            let mut upper = node.upper.clone();
            lower[k] = value;
            upper[k] = value;
            let child = solve_lp_bounded(model, &lower, &upper, &options.lp);
            stats.lp_iterations += child.stats.lp_iterations;
            match child.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => continue,
                SolveStatus::Unbounded => return Solution::without_point(SolveStatus::Unbounded, stats),
                _ => return Solution::without_point(SolveStatus::NumericallyUnstable, stats),
            }
            if let Some((inc, _)) = &incumbent {
                if child.objective >= inc - prune_tol(*inc) {
                    continue;
                }
            }
            heap.push(Node { bound: child.objective, id: next_id, lower, upper, values: child.values });
            next_id += 1;
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((_, mut values)) => {
            // Binaries within the integrality tolerance still leak a little
            // flow through their big-M rows; re-solve with them fixed.
            let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
            let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
            for &k in &binaries {
                values[k] = values[k].round();
                lower[k] = values[k];
                upper[k] = values[k];
            }
            let polished = solve_lp_bounded(model, &lower, &upper, &options.lp);
            stats.lp_iterations += polished.stats.lp_iterations;
            if polished.status == SolveStatus::Optimal {
                values = polished.values;
                for &k in &binaries {
                    values[k] = lower[k];
                }
            }
            let objective = model.objective.evaluate(&values);
            let status = if heap.is_empty() { SolveStatus::Optimal } else { SolveStatus::BudgetExceeded };
            let best_bound = if heap.is_empty() { objective } else { open_bound.min(objective) };
            stats.best_bound = Some(best_bound);
            stats.gap = Some((objective - best_bound) / objective.abs().max(1.0));
            Solution { status, objective, values, stats }
        }
        None if heap.is_empty() => Solution::without_point(SolveStatus::Infeasible, stats),
        None => {
            stats.best_bound = Some(open_bound);
            Solution::without_point(SolveStatus::BudgetExceeded, stats)
        }
    }
}

/// Binary whose value is farthest from integral; ties go to the lowest index.
fn most_fractional(binaries: &[usize], values: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in binaries {
        let x = values[k];
        let frac = (x - x.floor()).min(x.ceil() - x);
        if frac > tol && best.map_or(true, |(_, f)| frac > f) {
            best = Some((k, frac));
        }
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{LinExpr, Relation};

    fn knapsack() -> MilpModel {
        // max 10a + 13b + 7c  s.t. 4a + 6b + 3c ≤ 9
        let mut m = MilpModel::new("knap");
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let c = m.add_binary("c");
        let mut w = LinExpr::new();
        w.add_term(a, 4.0).add_term(b, 6.0).add_term(c, 3.0);
        m.add_row("w", w, Relation::Le, 9.0);
        let mut obj = LinExpr::new();
        obj.add_term(a, -10.0).add_term(b, -13.0).add_term(c, -7.0);
        m.set_objective(obj);
        m
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let m = knapsack();
        let s = solve_milp(&m);
        assert_eq!(s.status, SolveStatus::Optimal);
        let weights = [4.0, 6.0, 3.0];
        let profits = [10.0, 13.0, 7.0];
        let mut best = 0.0_f64;
        for mask in 0..8u32 {
            let (mut w, mut p) = (0.0, 0.0);
            for k in 0..3 {
                if mask & (1 << k) != 0 {
                    w += weights[k];
                    p += profits[k];
                }
            }
            if w <= 9.0 {
                best = best.max(p);
            }
        }
        assert!((s.objective + best).abs() < 1e-9);
        assert!(s.stats.root_bound.unwrap() <= s.objective + 1e-9);
    }

    #[test]
    fn incumbent_trace_is_non_increasing() {
        let s = solve_milp(&knapsack());
        assert!(s.stats.incumbent_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tiny_budget_reports_budget_exceeded() {
        let options = MilpOptions { node_budget: 1, ..MilpOptions::default() };
        let s = BranchAndBound::new(options).solve(&knapsack());
        assert_eq!(s.status, SolveStatus::BudgetExceeded);
        assert!(s.stats.best_bound.is_some());
    }

    #[test]
    fn binaries_fixed_by_constraints_equal_lp() {
        let mut m = MilpModel::new("fixed");
        let y = m.add_binary("y");
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_row("fix", LinExpr::term(y, 1.0), Relation::Eq, 1.0);
        let mut e = LinExpr::term(x, 1.0);
        e.add_term(y, -4.0);
        m.add_row("link", e, Relation::Ge, 0.0);
        let mut obj = LinExpr::term(x, 1.0);
        obj.add_term(y, 2.0);
        m.set_objective(obj);
        let lp = crate::milp::solve_lp(&m);
        let ip = solve_milp(&m);
        assert!((lp.objective - ip.objective).abs() < 1e-9);
        assert_eq!(ip.value(y), 1.0);
    }
}
