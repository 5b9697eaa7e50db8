//! Dense two-phase tableau simplex for the LP relaxation.
//!
//! Every variable is mapped onto one or two nonnegative tableau columns
//! (shifted by its finite bound, mirrored when only the upper bound is finite,
//! split when free). Finite upper bounds become explicit rows. Fixed
//! variables are substituted out before the tableau is built.

use super::model::{MilpModel, Relation};
use super::solution::{SolveStats, SolveStatus, Solution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { feasibility_tol: 1e-7, optimality_tol: 1e-9, pivot_tol: 1e-9, max_iterations: 50_000 }
    }
}

/// Solves the LP relaxation of `model` (integrality marks are ignored).
pub fn solve_lp(model: &MilpModel) -> Solution {
    solve_lp_with(model, &LpOptions::default())
}

pub fn solve_lp_with(model: &MilpModel, options: &LpOptions) -> Solution {
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    solve_lp_bounded(model, &lower, &upper, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PivotRule {
    Dantzig,
    Bland,
}

enum Outcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
    Stalled,
}

/// Solves the relaxation with the variable bounds replaced by `lower`/`upper`.
pub(crate) fn solve_lp_bounded(model: &MilpModel, lower: &[f64], upper: &[f64], options: &LpOptions) -> Solution {
    let mut iterations = 0;
    // A failed verification triggers one restart under Bland's rule.
    for rule in [PivotRule::Dantzig, PivotRule::Bland] {
        let (outcome, iters) = run(model, lower, upper, options, rule);
        iterations += iters;
        let stats = SolveStats { lp_iterations: iterations, ..SolveStats::default() };
        match outcome {
            Outcome::Optimal(values) => {
                if verify(model, lower, upper, &values, options) {
                    let objective = model.objective.evaluate(&values);
                    return Solution {
                        status: SolveStatus::Optimal,
                        objective,
                        values,
                        stats: SolveStats { root_bound: Some(objective), ..stats },
                    };
                }
            }
            Outcome::Infeasible => return Solution::without_point(SolveStatus::Infeasible, stats),
            Outcome::Unbounded => return Solution::without_point(SolveStatus::Unbounded, stats),
            Outcome::Stalled => {}
        }
    }
    Solution::without_point(
        SolveStatus::NumericallyUnstable,
        SolveStats { lp_iterations: iterations, ..SolveStats::default() },
    )
}

fn verify(model: &MilpModel, lower: &[f64], upper: &[f64], values: &[f64], options: &LpOptions) -> bool {
    let tol = options.feasibility_tol * 10.0;
    let bounds_ok = values.iter().enumerate().all(|(k, &x)| {
        let s = x.abs().max(1.0);
        x >= lower[k] - tol * s && x <= upper[k] + tol * s
    });
    bounds_ok && model.rows.iter().all(|r| r.violation(values) <= tol * r.scale(values))
}

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Fixed(f64),
    /// x = offset + sign · column
    Affine { col: usize, offset: f64, sign: f64 },
    /// x = pos − neg
    Split { pos: usize, neg: usize },
}

struct StdRow {
    coefs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

struct StandardForm {
    ncols: usize,
    rows: Vec<StdRow>,
    cost: Vec<f64>,
    maps: Vec<ColMap>,
}

impl StandardForm {
    fn build(model: &MilpModel, lower: &[f64], upper: &[f64], tol: f64) -> Option<StandardForm> {
        let mut maps = Vec::with_capacity(model.variables.len());
        let mut ncols = 0;
        let mut bound_rows = Vec::new();
        for (&l, &u) in lower.iter().zip(upper) {
            if l > u {
                return None;
            }
            let map = if l == u {
                ColMap::Fixed(l)
            } else if l.is_finite() {
                let col = ncols;
                ncols += 1;
                if u.is_finite() {
                    bound_rows.push((col, u - l));
                }
                ColMap::Affine { col, offset: l, sign: 1.0 }
            } else if u.is_finite() {
                let col = ncols;
                ncols += 1;
                ColMap::Affine { col, offset: u, sign: -1.0 }
            } else {
                let pos = ncols;
                ncols += 2;
                ColMap::Split { pos, neg: pos + 1 }
            };
            maps.push(map);
        }

        let mut rows = Vec::with_capacity(model.rows.len() + bound_rows.len());
        for row in &model.rows {
            let mut coefs = vec![0.0; ncols];
            let mut rhs = row.rhs;
            for &(v, a) in &row.expr.terms {
                match maps[v.0] {
                    ColMap::Fixed(val) => rhs -= a * val,
                    ColMap::Affine { col, offset, sign } => {
                        coefs[col] += a * sign;
                        rhs -= a * offset;
                    }
                    ColMap::Split { pos, neg } => {
                        coefs[pos] += a;
                        coefs[neg] -= a;
                    }
                }
            }
            if coefs.iter().all(|&c| c == 0.0) {
                let slack = tol * rhs.abs().max(1.0);
                let ok = match row.relation {
                    Relation::Le => 0.0 <= rhs + slack,
                    Relation::Ge => 0.0 >= rhs - slack,
                    Relation::Eq => rhs.abs() <= slack,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            rows.push(StdRow { coefs, relation: row.relation, rhs });
        }
        for (col, width) in bound_rows {
            let mut coefs = vec![0.0; ncols];
            coefs[col] = 1.0;
            rows.push(StdRow { coefs, relation: Relation::Le, rhs: width });
        }

        let mut cost = vec![0.0; ncols];
        for &(v, c) in &model.objective.terms {
            match maps[v.0] {
                ColMap::Fixed(_) => {}
                ColMap::Affine { col, sign, .. } => cost[col] += c * sign,
                ColMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }
        Some(StandardForm { ncols, rows, cost, maps })
    }

    fn recover(&self, cols: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| match *m {
                ColMap::Fixed(v) => v,
                ColMap::Affine { col, offset, sign } => offset + sign * cols[col],
                ColMap::Split { pos, neg } => cols[pos] - cols[neg],
            })
            .collect()
    }
}

struct Tableau {
    m: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    art_start: usize,
    iterations: usize,
    degenerate: usize,
    bland_after: usize,
}

enum Stop {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.data[r * w + c];
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        self.data[r * w + c] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[r] = c;
    }

    fn iterate(&mut self, allowed: usize, rule: PivotRule, options: &LpOptions) -> Stop {
        let obj = self.m;
        loop {
            if self.iterations >= options.max_iterations {
                return Stop::IterationLimit;
            }
            let bland = rule == PivotRule::Bland || self.degenerate > self.bland_after;
            let mut entering = None;
            let mut best = -options.optimality_tol;
            for j in 0..allowed {
                let d = self.at(obj, j);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = entering else { return Stop::Optimal };

            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a <= options.pivot_tol {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((li, lr, la)) => {
                        let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                        if tie {
                            if bland {
                                self.basis[i] < self.basis[li]
                            } else {
                                a > la
                            }
                        } else {
                            ratio < lr
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio, a));
                }
            }
            let Some((r, ratio, _)) = leave else { return Stop::Unbounded };
            if ratio <= 1e-12 {
                self.degenerate += 1;
            }
            self.pivot(r, c);
            self.iterations += 1;
            for i in 0..self.m {
                let idx = i * self.width + self.width - 1;
                if self.data[idx] < 0.0 && self.data[idx] > -1e-11 {
                    self.data[idx] = 0.0;
                }
            }
        }
    }
}

fn run(model: &MilpModel, lower: &[f64], upper: &[f64], options: &LpOptions, rule: PivotRule) -> (Outcome, usize) {
    let Some(sf) = StandardForm::build(model, lower, upper, options.feasibility_tol) else {
        return (Outcome::Infeasible, 0);
    };
    let m = sf.rows.len();
    let ns = sf.ncols;

    // Column layout: structural | slack/surplus | artificial | rhs
    let mut relations = Vec::with_capacity(m);
    let mut n_slack = 0;
    let mut n_art = 0;
    for row in &sf.rows {
        let flip = row.rhs < 0.0;
        let rel = match (row.relation, flip) {
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (r, _) => r,
        };
        match rel {
            Relation::Le => n_slack += 1,
            Relation::Ge => {
                n_slack += 1;
                n_art += 1
            }
            Relation::Eq => n_art += 1,
        }
        relations.push((rel, flip));
    }
    let art_start = ns + n_slack;
    let total = art_start + n_art;
    let width = total + 1;
    let mut t = Tableau {
        m,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
        art_start,
        iterations: 0,
        degenerate: 0,
        bland_after: 10 * (m + total),
    };

    let mut slack = ns;
    let mut art = art_start;
    let mut bmax: f64 = 1.0;
    for (i, (row, &(rel, flip))) in sf.rows.iter().zip(&relations).enumerate() {
        let s = if flip { -1.0 } else { 1.0 };
        for j in 0..ns {
            t.data[i * width + j] = s * row.coefs[j];
        }
        let b = s * row.rhs;
        bmax = bmax.max(b.abs());
        t.data[i * width + total] = b;
        match rel {
            Relation::Le => {
                t.data[i * width + slack] = 1.0;
                t.basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                t.data[i * width + slack] = -1.0;
                slack += 1;
                t.data[i * width + art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                t.data[i * width + art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
        }
    }

    // Phase I: minimize the sum of artificials.
    if n_art > 0 {
        for i in 0..m {
            if t.basis[i] >= art_start {
                for j in 0..width {
                    if j < art_start || j == total {
                        let v = t.data[i * width + j];
                        t.data[m * width + j] -= v;
                    }
                }
            }
        }
        match t.iterate(total, rule, options) {
            Stop::Optimal => {}
            Stop::IterationLimit => return (Outcome::Stalled, t.iterations),
            // Phase I is bounded below by zero.
            Stop::Unbounded => return (Outcome::Stalled, t.iterations),
        }
        let infeasibility = -t.at(m, total);
        if infeasibility > options.feasibility_tol * bmax {
            return (Outcome::Infeasible, t.iterations);
        }
        for i in 0..m {
            if t.basis[i] >= art_start {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..art_start {
                    let a = t.at(i, j).abs();
                    if a > options.pivot_tol && best.map_or(true, |(_, b)| a > b) {
                        best = Some((j, a));
                    }
                }
                // No candidate: the row is redundant and its artificial stays at zero.
                if let Some((j, _)) = best {
                    t.pivot(i, j);
                }
            }
        }
    }

    // Phase II objective row.
    for j in 0..width {
        t.data[m * width + j] = if j < ns { sf.cost[j] } else { 0.0 };
    }
    for i in 0..m {
        let b = t.basis[i];
        let cb = if b < ns { sf.cost[b] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                let v = t.data[i * width + j];
                t.data[m * width + j] -= cb * v;
            }
        }
    }
    match t.iterate(t.art_start, rule, options) {
        Stop::Optimal => {}
        Stop::Unbounded => return (Outcome::Unbounded, t.iterations),
        Stop::IterationLimit => return (Outcome::Stalled, t.iterations),
    }

    let mut cols = vec![0.0; ns];
    for i in 0..m {
        let b = t.basis[i];
        if b < ns {
            cols[b] = t.rhs(i).max(0.0);
        }
    }
    (Outcome::Optimal(sf.recover(&cols)), t.iterations)
}
