//! Cost/emission Pareto fronts by the augmented ε-constraint method.
//!
//! The payoff table solves one anchor per objective. Emission bounds come
//! from the two anchors, the grid splits `[Em_min, Em_max]` into `V` steps,
//! and every grid point minimizes `TC + θ·S` subject to `Em + S = ε`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::builders::{
    build_system_model, build_user_model_ii, collected_mass, solve_user, solve_lexicographic, solve_user_collection, ObjectiveKind,
};
use crate::domain::NetworkInstance;
use crate::error::{Error, Result};
use crate::milp::{LinExpr, MilpModel, MilpSolver, Relation, Solution, SolveStatus};
use crate::objectives::{build_user_phase_expressions, StageBreakdown, StageExpressions, UserPhase};

pub const DEFAULT_THETA: f64 = 1e-4;
pub const DEFAULT_GRID: usize = 10;
pub const THETA_RANGE: (f64, f64) = (1e-6, 1e-3);

/// One evaluated candidate of a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub total_cost: f64,
    pub total_emission: f64,
    /// ε-row slack; zero for anchors.
    pub slack: f64,
    pub solution: Solution,
    pub breakdown: Option<StageBreakdown>,
}

/// A set of models over which cost and emission can be traded off.
pub trait BiObjectiveFamily {
    fn min_cost(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint>;
    fn min_emission(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint>;
    /// Minimizes `TC + θ·S` with `Em + S = ε`, `S ≥ 0`. `Ok(None)` when the
    /// grid point admits no solution.
    fn epsilon_solve(&self, epsilon: f64, theta: f64, solver: &dyn MilpSolver) -> Result<Option<FamilyPoint>>;
}

/// A single MILP with two objective expressions.
#[derive(Debug, Clone)]
pub struct BiObjective {
    pub model: MilpModel,
    pub cost: LinExpr,
    pub emission: LinExpr,
    pub stages: Option<StageExpressions>,
}

impl BiObjective {
    pub fn new(model: MilpModel, cost: LinExpr, emission: LinExpr) -> Self {
        Self { model, cost, emission, stages: None }
    }

    /// The system-optimum model of `inst`.
    pub fn system(inst: &NetworkInstance) -> Result<Self> {
        let art = build_system_model(inst, ObjectiveKind::Cost)?;
        Ok(Self {
            cost: art.stages.total_cost(),
            emission: art.stages.total_emission(),
            stages: Some(art.stages),
            model: art.model,
        })
    }

    fn point(&self, solution: Solution, slack: f64) -> FamilyPoint {
        FamilyPoint {
            total_cost: self.cost.evaluate(&solution.values),
            total_emission: self.emission.evaluate(&solution.values),
            slack,
            breakdown: self.stages.as_ref().map(|s| s.evaluate(&solution.values)),
            solution,
        }
    }

    /// Lexicographic anchor: a plain solve may return a weakly dominated point
    /// when the first objective ties.
    fn anchor(&self, first: &LinExpr, second: &LinExpr, what: &str, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        let s = solve_lexicographic(&self.model, &[first.clone(), second.clone()], solver);
        if !s.is_optimal() {
            return Err(Error::NotOptimal { what: what.into(), status: s.status });
        }
        Ok(self.point(s, 0.0))
    }
}

/// Adds `S ≥ 0` and `expr + S = rhs`, returning the slack variable.
fn add_epsilon_row(model: &mut MilpModel, expr: &LinExpr, rhs: f64) -> crate::milp::VarId {
    let s = model.add_continuous("eps_slack", 0.0, f64::INFINITY);
    let mut row = expr.clone();
    row.add_term(s, 1.0);
    model.add_row("epsilon", row, Relation::Eq, rhs);
    s
}

fn grid_failure(s: &Solution, what: &str) -> Result<()> {
    match s.status {
        SolveStatus::Optimal | SolveStatus::Infeasible => Ok(()),
        status => Err(Error::NotOptimal { what: what.into(), status }),
    }
}

impl BiObjectiveFamily for BiObjective {
    fn min_cost(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        self.anchor(&self.cost, &self.emission, "cost anchor", solver)
    }

    fn min_emission(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        self.anchor(&self.emission, &self.cost, "emission anchor", solver)
    }

    fn epsilon_solve(&self, epsilon: f64, theta: f64, solver: &dyn MilpSolver) -> Result<Option<FamilyPoint>> {
        let mut m = self.model.clone();
        let s = add_epsilon_row(&mut m, &self.emission, epsilon);
        let mut obj = self.cost.clone();
        obj.add_term(s, theta);
        m.set_objective(obj);
        let sol = solver.solve(&m);
        grid_failure(&sol, "epsilon grid point")?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        let slack = sol.value(s);
        Ok(Some(self.point(sol, slack)))
    }
}

/// The decentralized formulation: phase I by the residents' cost, then
/// phase II with the ε-row on the composed emission. Phase-I and drop-off
/// emission terms are constants at that point and move to the right-hand
/// side.
#[derive(Debug, Clone)]
pub struct UserFamily<'a> {
    pub instance: &'a NetworkInstance,
}

impl UserFamily<'_> {
    fn anchor(&self, objective: ObjectiveKind, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        let u = solve_user(self.instance, objective, solver)?;
        let status = u.status();
        let (Some(b), Some(p)) = (u.breakdown, u.processing) else {
            return Err(Error::NotOptimal { what: format!("user {objective} anchor"), status });
        };
        if status != SolveStatus::Optimal {
            return Err(Error::NotOptimal { what: format!("user {objective} anchor"), status });
        }
        Ok(FamilyPoint {
            total_cost: b.total_cost,
            total_emission: b.total_emission,
            slack: 0.0,
            solution: p.solution,
            breakdown: Some(b),
        })
    }
}

impl BiObjectiveFamily for UserFamily<'_> {
    fn min_cost(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        self.anchor(ObjectiveKind::Cost, solver)
    }

    fn min_emission(&self, solver: &dyn MilpSolver) -> Result<FamilyPoint> {
        self.anchor(ObjectiveKind::Emission, solver)
    }

    fn epsilon_solve(&self, epsilon: f64, theta: f64, solver: &dyn MilpSolver) -> Result<Option<FamilyPoint>> {
        let inst = self.instance;
        let first = solve_user_collection(inst, ObjectiveKind::Cost, solver)?;
        grid_failure(&first.solution, "user collection phase")?;
        let Some(first_b) = first.breakdown.filter(|_| first.solution.is_optimal()) else {
            return Ok(None);
        };
        let rq = collected_mass(inst, &first.artifacts.vars, &first.solution)?;
        let art = build_user_model_ii(inst, &rq, ObjectiveKind::Cost)?;
        let ex = build_user_phase_expressions(inst, &art.vars, UserPhase::Processing { collected: &rq })?;
        let mut m = art.model.clone();
        let s = add_epsilon_row(&mut m, &ex.emission, epsilon - first_b.total_emission);
        let mut obj = ex.cost.clone();
        obj.add_term(s, theta);
        m.set_objective(obj);
        let sol = solver.solve(&m);
        grid_failure(&sol, "epsilon grid point")?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        let b = first_b.combined(&art.stages.evaluate(&sol.values));
        let slack = sol.value(s);
        Ok(Some(FamilyPoint { total_cost: b.total_cost, total_emission: b.total_emission, slack, solution: sol, breakdown: Some(b) }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorValues {
    pub total_cost: f64,
    pub total_emission: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Payoff {
    pub em_min: f64,
    pub em_max: f64,
    pub cost_anchor: AnchorValues,
    pub emission_anchor: AnchorValues,
}

/// Solves both anchors and takes the emission range over them.
pub fn compute_payoff(family: &dyn BiObjectiveFamily, solver: &dyn MilpSolver) -> Result<Payoff> {
    let tc = family.min_cost(solver)?;
    let em = family.min_emission(solver)?;
    let values = |p: &FamilyPoint| AnchorValues { total_cost: p.total_cost, total_emission: p.total_emission };
    Ok(Payoff {
        em_min: tc.total_emission.min(em.total_emission),
        em_max: tc.total_emission.max(em.total_emission),
        cost_anchor: values(&tc),
        emission_anchor: values(&em),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub v: usize,
    pub epsilon: f64,
    pub total_cost: f64,
    pub total_emission: f64,
    pub slack: f64,
    pub solution: Solution,
    pub breakdown: Option<StageBreakdown>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
    pub payoff: Payoff,
    pub grid: usize,
    pub theta: f64,
    /// Grid indices that had no solution.
    pub skipped: Vec<usize>,
}

impl ParetoFront {
    pub fn delta_epsilon(&self) -> f64 {
        (self.payoff.em_max - self.payoff.em_min) / self.grid as f64
    }

    /// `v,epsilon,total_cost,total_emission`, one row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,epsilon,total_cost,total_emission\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.v, p.epsilon, p.total_cost, p.total_emission);
        }
        out
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

/// `a` dominates `b`: no worse in both objectives and better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    let le = |x: f64, y: f64| x <= y || same(x, y);
    let lt = |x: f64, y: f64| x < y && !same(x, y);
    le(a.0, b.0) && le(a.1, b.1) && (lt(a.0, b.0) || lt(a.1, b.1))
}

/// Runs the grid `v = 0..=V`. Infeasible grid points are skipped.
pub fn epsilon_sweep(
    family: &dyn BiObjectiveFamily,
    grid: usize,
    theta: f64,
    solver: &dyn MilpSolver,
) -> Result<ParetoFront> {
    if grid == 0 {
        return Err(Error::Config("grid count V must be at least 1".into()));
    }
    if !(THETA_RANGE.0..=THETA_RANGE.1).contains(&theta) {
        return Err(Error::Config(format!("theta {theta} outside [{}, {}]", THETA_RANGE.0, THETA_RANGE.1)));
    }
    let payoff = compute_payoff(family, solver)?;
    let degenerate = same(payoff.em_min, payoff.em_max);
    let delta = if degenerate { 0.0 } else { (payoff.em_max - payoff.em_min) / grid as f64 };
    let last = if degenerate { 0 } else { grid };

    let mut raw = Vec::new();
    let mut skipped = Vec::new();
    for v in 0..=last {
        let epsilon = payoff.em_min + v as f64 * delta;
        match family.epsilon_solve(epsilon, theta, solver)? {
            Some(p) => raw.push(ParetoPoint {
                v,
                epsilon,
                total_cost: p.total_cost,
                total_emission: p.total_emission,
                slack: p.slack,
                solution: p.solution,
                breakdown: p.breakdown,
            }),
            None => skipped.push(v),
        }
    }

    let key = |p: &ParetoPoint| (p.total_cost, p.total_emission);
    let mut points: Vec<ParetoPoint> = Vec::new();
    for p in raw.iter() {
        let dup = points.iter().any(|q| same(q.total_cost, p.total_cost) && same(q.total_emission, p.total_emission));
        let dominated = raw.iter().any(|q| dominates(key(q), key(p)));
        if !dup && !dominated {
            points.push(p.clone());
        }
    }
    Ok(ParetoFront { points, payoff, grid, theta, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::BranchAndBound;

    /// Pick exactly one of the options `(cost, emission)`.
    fn choice(options: &[(f64, f64)]) -> BiObjective {
        let mut m = MilpModel::new("choice");
        let z: Vec<_> = (0..options.len()).map(|k| m.add_binary(format!("z{k}"))).collect();
        let mut one = LinExpr::new();
        let mut cost = LinExpr::new();
        let mut em = LinExpr::new();
        for (k, &(c, e)) in options.iter().enumerate() {
            one.add_term(z[k], 1.0);
            cost.add_term(z[k], c);
            em.add_term(z[k], e);
        }
        m.add_row("pick", one, Relation::Eq, 1.0);
        BiObjective::new(m, cost, em)
    }

    #[test]
    fn proportional_objectives_degenerate_to_one_point() {
        let fam = choice(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]);
        let s = BranchAndBound::default();
        let p = compute_payoff(&fam, &s).unwrap();
        assert_eq!(p.em_min, p.em_max);
        let front = epsilon_sweep(&fam, 7, DEFAULT_THETA, &s).unwrap();
        assert_eq!(front.points.len(), 1);
        assert_eq!(front.points[0].total_cost, 1.0);
    }

    #[test]
    fn single_step_grid_returns_the_anchors() {
        let fam = choice(&[(1.0, 5.0), (2.0, 3.0), (4.0, 1.0)]);
        let front = epsilon_sweep(&fam, 1, DEFAULT_THETA, &BranchAndBound::default()).unwrap();
        let pts: Vec<(f64, f64)> = front.points.iter().map(|p| (p.total_cost, p.total_emission)).collect();
        assert_eq!(pts, vec![(4.0, 1.0), (1.0, 5.0)]);
    }

    #[test]
    fn parameter_checks() {
        let fam = choice(&[(1.0, 5.0), (4.0, 1.0)]);
        let s = BranchAndBound::default();
        assert!(epsilon_sweep(&fam, 0, DEFAULT_THETA, &s).is_err());
        assert!(epsilon_sweep(&fam, 10, 0.0, &s).is_err());
        assert!(epsilon_sweep(&fam, 10, 1e-2, &s).is_err());
    }

    #[test]
    fn dominance_relation() {
        assert!(dominates((1.0, 1.0), (1.0, 2.0)));
        assert!(!dominates((1.0, 2.0), (1.0, 2.0)));
        assert!(!dominates((1.0, 3.0), (2.0, 2.0)));
    }

    #[test]
    fn csv_export() {
        let fam = choice(&[(1.0, 5.0), (4.0, 1.0)]);
        let front = epsilon_sweep(&fam, 2, DEFAULT_THETA, &BranchAndBound::default()).unwrap();
        let csv = front.to_csv();
        assert!(csv.starts_with("v,epsilon,total_cost,total_emission\n"));
        assert_eq!(csv.lines().count(), 1 + front.points.len());
    }
}
