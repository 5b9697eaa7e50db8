//! Assembly of the system-optimum MILP and the two user-optimum MILPs.
//!
//! Every row carries one [`ConstraintTag`]; its label doubles as the row name
//! and is the key robust specs use to address rows.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{FacilityTier, Matrix, NetworkInstance};
use crate::error::{Error, Result};
use crate::milp::{write_lp, LinExpr, MilpModel, MilpSolver, Relation, Solution, SolveStatus, VarId};
use crate::objectives::{
    build_user_phase_expressions, tier_fixed_cost, tier_processing, tier_resale, Metric, StageBreakdown,
    StageExpressions, UserPhase, VarMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Cost,
    Emission,
}

impl ObjectiveKind {
    pub fn label(self) -> &'static str {
        match self {
            ObjectiveKind::Cost => "cost",
            ObjectiveKind::Emission => "emission",
        }
    }

    pub fn other(self) -> ObjectiveKind {
        match self {
            ObjectiveKind::Cost => ObjectiveKind::Emission,
            ObjectiveKind::Emission => ObjectiveKind::Cost,
        }
    }

    fn metric(self) -> Metric {
        match self {
            ObjectiveKind::Cost => Metric::Cost,
            ObjectiveKind::Emission => Metric::Emission,
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cost" => Ok(ObjectiveKind::Cost),
            "emission" => Ok(ObjectiveKind::Emission),
            other => Err(Error::Config(format!("unknown objective `{other}` (expected cost|emission)"))),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    System,
    /// Residence → drop-off assignment.
    UserCollection,
    /// Drop-off → processors routing.
    UserProcessing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagFamily {
    FlowBalance,
    Capacity,
    /// Flow-to-indicator rows of facilities without a binding declared capacity.
    Linking,
    MinShipment,
    OpenCount,
    Policy,
    VariableDomain,
    Epsilon,
    RobustDual,
}

impl TagFamily {
    pub fn label(self) -> &'static str {
        match self {
            TagFamily::FlowBalance => "flow-balance",
            TagFamily::Capacity => "capacity",
            TagFamily::Linking => "linking",
            TagFamily::MinShipment => "min-shipment",
            TagFamily::OpenCount => "open-count",
            TagFamily::Policy => "policy",
            TagFamily::VariableDomain => "variable-domain",
            TagFamily::Epsilon => "epsilon",
            TagFamily::RobustDual => "robust-dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintTag {
    pub family: TagFamily,
    pub label: String,
}

/// A built model together with its variable maps, row tags and the stage
/// expressions of the objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifacts {
    pub kind: ModelKind,
    pub objective: ObjectiveKind,
    pub model: MilpModel,
    pub vars: VarMap,
    /// One tag per row, parallel to `model.rows`.
    pub tags: Vec<ConstraintTag>,
    /// Structural problems noticed at build time (the solver has the final say).
    pub warnings: Vec<String>,
    pub stages: StageExpressions,
}

impl ModelArtifacts {
    fn new(kind: ModelKind, objective: ObjectiveKind, name: &str) -> Self {
        Self {
            kind,
            objective,
            model: MilpModel::new(name),
            vars: VarMap::default(),
            tags: Vec::new(),
            warnings: Vec::new(),
            stages: StageExpressions::default(),
        }
    }

    /// Appends a tagged row; the label is also the row name.
    pub fn push_row(&mut self, family: TagFamily, label: impl Into<String>, expr: LinExpr, relation: Relation, rhs: f64) {
        let label = label.into();
        self.model.add_row(label.clone(), expr, relation, rhs);
        self.tags.push(ConstraintTag { family, label });
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        self.tags.iter().position(|t| t.label == label)
    }

    pub fn rows_in(&self, family: TagFamily) -> impl Iterator<Item = usize> + '_ {
        self.tags.iter().enumerate().filter(move |(_, t)| t.family == family).map(|(k, _)| k)
    }

    /// LP-format dump with each row preceded by its tag.
    pub fn tagged_lp(&self) -> String {
        let comments: Vec<String> = self.tags.iter().map(|t| format!("[{}] {}", t.family.label(), t.label)).collect();
        write_lp(&self.model, Some(&comments))
    }

    pub fn breakdown(&self, solution: &Solution) -> Option<StageBreakdown> {
        solution.has_point().then(|| self.stages.evaluate(&solution.values))
    }

    /// Fixes each variable in `ids` to the matching entry of `values`.
    pub fn fix_all(&mut self, ids: &[VarId], values: &[f64]) {
        for (&id, &v) in ids.iter().zip(values) {
            self.model.fix(id, v);
        }
    }
}

fn flat3(ids: &[Vec<Vec<VarId>>]) -> Vec<VarId> {
    ids.iter().flatten().flatten().copied().collect()
}

fn ensure_valid(inst: &NetworkInstance) -> Result<()> {
    inst.validate().into_result()
}

/// Natural upper bound on the inflow of `item` at `tier`, used as big-M when
/// the declared capacity is larger (or absent).
fn natural_inflow(inst: &NetworkInstance, tier: FacilityTier, item: usize) -> f64 {
    let p = &inst.processing;
    let re_drp = &p.dropoff.resale;
    match tier {
        FacilityTier::Dropoff => inst.product_supply(item),
        FacilityTier::Primary => (1.0 - re_drp[item]) * inst.product_supply(item),
        FacilityTier::Secondary => (0..inst.num_products())
            .map(|i| {
                let eff = (0..inst.num_primaries()).map(|pp| p.efficiency(item, pp)).fold(0.0, f64::max);
                p.composition[item][i] * eff * (1.0 - p.primary.resale[i]) * (1.0 - re_drp[i]) * inst.product_supply(i)
            })
            .sum(),
    }
}

/// Inflow expression of `item` at facility `f` of `tier`.
fn inflow(inst: &NetworkInstance, vars: &VarMap, tier: FacilityTier, item: usize, f: usize) -> Result<LinExpr> {
    let mut e = LinExpr::new();
    match tier {
        FacilityTier::Dropoff => {
            for (h, by_drop) in vars.rtd()?[item].iter().enumerate() {
                e.add_term(by_drop[f], inst.supply.mass[item][h]);
            }
        }
        FacilityTier::Primary => {
            for by_pri in &vars.dtp()?[item] {
                e.add_term(by_pri[f], 1.0);
            }
        }
        FacilityTier::Secondary => {
            for by_sec in &vars.pts()?[item] {
                e.add_term(by_sec[f], 1.0);
            }
        }
    }
    Ok(e)
}

fn tier_tag(tier: FacilityTier) -> &'static str {
    match tier {
        FacilityTier::Dropoff => "drp",
        FacilityTier::Primary => "pri",
        FacilityTier::Secondary => "sec",
    }
}

/// Capacity, aggregate capacity, minimum-shipment and open-count rows of one tier.
fn add_tier_rows(art: &mut ModelArtifacts, inst: &NetworkInstance, tier: FacilityTier) -> Result<()> {
    let t = inst.processing.tier(tier).clone();
    let open = art.vars.open_indicators(tier)?.clone();
    let items = inst.items(tier).to_vec();
    let facilities = inst.facilities(tier).to_vec();
    let tag = tier_tag(tier);

    for (k, item) in items.iter().enumerate() {
        let natural = natural_inflow(inst, tier, k);
        for (f, fac) in facilities.iter().enumerate() {
            let flow = inflow(inst, &art.vars, tier, k, f)?;
            let declared = t.capacity(k, f);
            let family = if declared < natural { TagFamily::Capacity } else { TagFamily::Linking };
            let mut cap = flow.clone();
            cap.add_term(open[f], -declared.min(natural));
            art.push_row(family, format!("cap_{tag}[{item},{fac}]"), cap, Relation::Le, 0.0);
            let mut lim = flow;
            lim.add_term(open[f], -t.min_shipment(k, f));
            art.push_row(TagFamily::MinShipment, format!("lim_{tag}[{item},{fac}]"), lim, Relation::Ge, 0.0);
        }
    }
    for (f, fac) in facilities.iter().enumerate() {
        if let Some(total) = t.total_capacity(f) {
            let mut e = LinExpr::new();
            for k in 0..items.len() {
                e += &inflow(inst, &art.vars, tier, k, f)?;
            }
            e.add_term(open[f], -total);
            art.push_row(TagFamily::Capacity, format!("tcap_{tag}[{fac}]"), e, Relation::Le, 0.0);
        }
    }
    let mut count = LinExpr::new();
    for &v in &open {
        count.add_term(v, 1.0);
    }
    art.push_row(TagFamily::OpenCount, format!("nof_{tag}"), count, Relation::Ge, t.min_open as f64);

    // Structural warning: capacity short of the natural inflow.
    for (k, item) in items.iter().enumerate() {
        let total_cap: f64 = (0..facilities.len()).map(|f| t.capacity(k, f)).sum();
        let need = natural_inflow(inst, tier, k);
        if total_cap < need - 1e-9 {
            art.warnings.push(format!(
                "{} capacity for {item} ({total_cap}) is below its inflow ({need})",
                tier.label()
            ));
        }
    }
    Ok(())
}

fn add_assignment_rows(art: &mut ModelArtifacts, inst: &NetworkInstance) -> Result<()> {
    let rtd = art.vars.rtd()?.clone();
    for (i, by_area) in rtd.iter().enumerate() {
        for (h, by_drop) in by_area.iter().enumerate() {
            let mut e = LinExpr::new();
            for &v in by_drop {
                e.add_term(v, 1.0);
            }
            if by_drop.iter().all(|&v| art.model.var(v).upper == 0.0) {
                art.warnings.push(format!(
                    "area {} has no permitted drop-off route",
                    inst.sets.residence_areas[h]
                ));
            }
            let label = format!("bal_res[{},{}]", inst.sets.products[i], inst.sets.residence_areas[h]);
            art.push_row(TagFamily::FlowBalance, label, e, Relation::Eq, 1.0);
        }
    }
    Ok(())
}

/// Drop-off balance. With `collected = None` the inflow is the RTD
/// expression; otherwise it is the fixed mass `rq[i][c]`.
fn add_dropoff_balance(art: &mut ModelArtifacts, inst: &NetworkInstance, collected: Option<&Matrix>) -> Result<()> {
    let dtp = art.vars.dtp()?.clone();
    let re = &inst.processing.dropoff.resale;
    for (i, by_drop) in dtp.iter().enumerate() {
        for (c, by_pri) in by_drop.iter().enumerate() {
            let mut e = LinExpr::new();
            for &v in by_pri {
                e.add_term(v, 1.0);
            }
            let mut rhs = 0.0;
            match collected {
                None => {
                    for (h, by_d) in art.vars.rtd()?[i].iter().enumerate() {
                        e.add_term(by_d[c], -inst.supply.mass[i][h] * (1.0 - re[i]));
                    }
                }
                Some(rq) => rhs = (1.0 - re[i]) * rq[i][c],
            }
            let label = format!("bal_drp[{},{}]", inst.sets.products[i], inst.sets.dropoffs[c]);
            art.push_row(TagFamily::FlowBalance, label, e, Relation::Eq, rhs);
        }
    }
    Ok(())
}

fn add_primary_balance(art: &mut ModelArtifacts, inst: &NetworkInstance) -> Result<()> {
    let pts = art.vars.pts()?.clone();
    let dtp = art.vars.dtp()?.clone();
    let p = &inst.processing;
    for (j, by_pri) in pts.iter().enumerate() {
        for (pp, by_sec) in by_pri.iter().enumerate() {
            let mut e = LinExpr::new();
            for &v in by_sec {
                e.add_term(v, 1.0);
            }
            for (i, by_drop) in dtp.iter().enumerate() {
                let coef = p.composition[j][i] * p.efficiency(j, pp) * (1.0 - p.primary.resale[i]);
                for by_p in by_drop {
                    e.add_term(by_p[pp], -coef);
                }
            }
            let label = format!("bal_pri[{},{}]", inst.sets.materials[j], inst.sets.primaries[pp]);
            art.push_row(TagFamily::FlowBalance, label, e, Relation::Eq, 0.0);
        }
    }
    Ok(())
}

fn wants_policy(inst: &NetworkInstance) -> bool {
    inst.policy.siting_rules || !inst.policy.extra_rows.is_empty()
}

/// Full system-optimum model.
pub fn build_system_model(inst: &NetworkInstance, objective: ObjectiveKind) -> Result<ModelArtifacts> {
    ensure_valid(inst)?;
    let mut art = ModelArtifacts::new(ModelKind::System, objective, &format!("{}-system-{objective}", inst.name));
    art.vars.register_collection(&mut art.model, inst);
    art.vars.register_processing(&mut art.model, inst);
    add_assignment_rows(&mut art, inst)?;
    add_dropoff_balance(&mut art, inst, None)?;
    add_primary_balance(&mut art, inst)?;
    for tier in FacilityTier::ALL {
        add_tier_rows(&mut art, inst, tier)?;
    }
    if wants_policy(inst) {
        add_policy_constraints(&mut art, inst)?;
    }
    art.stages = StageExpressions::build(inst, &art.vars)?;
    let obj = match objective {
        ObjectiveKind::Cost => art.stages.total_cost(),
        ObjectiveKind::Emission => art.stages.total_emission(),
    };
    art.model.set_objective(obj);
    Ok(art)
}

/// User model I: residents pick drop-off sites minimizing their own
/// transport cost (or emission).
pub fn build_user_model_i(inst: &NetworkInstance, objective: ObjectiveKind) -> Result<ModelArtifacts> {
    ensure_valid(inst)?;
    let mut art =
        ModelArtifacts::new(ModelKind::UserCollection, objective, &format!("{}-user-i-{objective}", inst.name));
    art.vars.register_collection(&mut art.model, inst);
    add_assignment_rows(&mut art, inst)?;
    add_tier_rows(&mut art, inst, FacilityTier::Dropoff)?;
    if wants_policy(inst) {
        add_policy_constraints(&mut art, inst)?;
    }
    art.stages = StageExpressions::build(inst, &art.vars)?;
    let ex = build_user_phase_expressions(inst, &art.vars, UserPhase::Collection)?;
    art.model.set_objective(match objective {
        ObjectiveKind::Cost => ex.cost,
        ObjectiveKind::Emission => ex.emission,
    });
    Ok(art)
}

/// Checks that `rq` has the product × drop-off shape, is non-negative and
/// sums to each product's supply.
pub fn check_collected(inst: &NetworkInstance, rq: &Matrix) -> Result<()> {
    if rq.len() != inst.num_products() || rq.iter().any(|r| r.len() != inst.num_dropoffs()) {
        return Err(Error::Config("collected quantities must be a products x drop-offs matrix".into()));
    }
    for (i, row) in rq.iter().enumerate() {
        if row.iter().any(|&v| !v.is_finite() || v < -1e-9) {
            return Err(Error::Config(format!("collected quantity of {} is negative", inst.sets.products[i])));
        }
        let supply = inst.product_supply(i);
        let total: f64 = row.iter().sum();
        if (total - supply).abs() > 1e-6 * supply.max(1.0) {
            return Err(Error::Config(format!(
                "collected {} totals {total} kg but supply is {supply} kg",
                inst.sets.products[i]
            )));
        }
    }
    Ok(())
}

/// User model II: processors route the collected masses `rq[i][c]`.
pub fn build_user_model_ii(inst: &NetworkInstance, rq: &Matrix, objective: ObjectiveKind) -> Result<ModelArtifacts> {
    ensure_valid(inst)?;
    check_collected(inst, rq)?;
    let mut art =
        ModelArtifacts::new(ModelKind::UserProcessing, objective, &format!("{}-user-ii-{objective}", inst.name));
    art.vars.register_processing(&mut art.model, inst);
    add_dropoff_balance(&mut art, inst, Some(rq))?;
    add_primary_balance(&mut art, inst)?;
    add_tier_rows(&mut art, inst, FacilityTier::Primary)?;
    add_tier_rows(&mut art, inst, FacilityTier::Secondary)?;
    if !inst.policy.extra_rows.is_empty() {
        add_extra_rows(&mut art, inst)?;
    }
    art.stages = StageExpressions::build(inst, &art.vars)?;
    let ex = build_user_phase_expressions(inst, &art.vars, UserPhase::Processing { collected: rq })?;
    art.model.set_objective(match objective {
        ObjectiveKind::Cost => ex.cost,
        ObjectiveKind::Emission => ex.emission,
    });
    Ok(art)
}

/// County and city siting rows for drop-off sites, then any extra rows.
///
/// Per county: open sites ≥ max(1, number of cities above the population
/// threshold). Per such city: open sites ≥ 1. Counties come from
/// `policy.counties` and the drop-off location map.
pub fn add_policy_constraints(art: &mut ModelArtifacts, inst: &NetworkInstance) -> Result<()> {
    if inst.policy.siting_rules {
        let locations = inst
            .sets
            .dropoff_locations
            .as_ref()
            .ok_or_else(|| Error::Config("siting rules need sets.dropoff_locations".into()))?;
        let x = art.vars.x()?.clone();
        let mut counties: Vec<String> = inst.policy.counties.clone();
        for loc in locations {
            if !counties.contains(&loc.county) {
                counties.push(loc.county.clone());
            }
        }
        let site_ids = |pred: &dyn Fn(&crate::domain::DropoffLocation) -> bool| -> BTreeSet<usize> {
            locations.iter().filter(|l| pred(l)).filter_map(|l| inst.dropoff_index(&l.dropoff)).collect()
        };
        let threshold = inst.policy.city_threshold;
        for county in &counties {
            let big: Vec<&crate::domain::City> = inst
                .policy
                .cities
                .iter()
                .filter(|t| &t.county == county && t.population > threshold)
                .collect();
            let sites = site_ids(&|l| &l.county == county);
            if sites.is_empty() {
                art.warnings.push(format!("county {county} has no candidate drop-off site; model is infeasible"));
            }
            let mut e = LinExpr::new();
            for &c in &sites {
                e.add_term(x[c], 1.0);
            }
            let rhs = big.len().max(1) as f64;
            art.push_row(TagFamily::Policy, format!("county[{county}]"), e, Relation::Ge, rhs);
            for city in big {
                let sites = site_ids(&|l| l.county == city.county && l.city == city.name);
                if sites.is_empty() {
                    art.warnings.push(format!("city {} has no candidate drop-off site; model is infeasible", city.name));
                }
                let mut e = LinExpr::new();
                for &c in &sites {
                    e.add_term(x[c], 1.0);
                }
                art.push_row(TagFamily::Policy, format!("city[{},{}]", city.county, city.name), e, Relation::Ge, 1.0);
            }
        }
    }
    add_extra_rows(art, inst)
}

/// Extra rows whose variables all exist in the model are added; rows naming
/// none of the model's variables are skipped (they belong to another phase).
fn add_extra_rows(art: &mut ModelArtifacts, inst: &NetworkInstance) -> Result<()> {
    for row in &inst.policy.extra_rows {
        let resolved: Vec<Option<VarId>> = row.terms.iter().map(|(n, _)| art.model.var_by_name(n)).collect();
        if resolved.iter().all(Option::is_none) {
            art.warnings.push(format!("policy row {} skipped: no variable in this model", row.name));
            continue;
        }
        let mut e = LinExpr::new();
        for ((name, coef), id) in row.terms.iter().zip(&resolved) {
            let id = id.ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            e.add_term(id, *coef);
        }
        art.push_row(TagFamily::Policy, format!("extra[{}]", row.name), e, row.relation, row.rhs);
    }
    Ok(())
}

/// Residence areas whose product `i` is sent (in part) to a drop-off other
/// than the nearest permitted one. Returns `(product, area, dropoff, fraction)`.
pub fn nearest_assignment_deviations(
    inst: &NetworkInstance,
    art: &ModelArtifacts,
    solution: &Solution,
) -> Result<Vec<(String, String, String, f64)>> {
    let rtd = art.vars.rtd()?;
    let mut out = Vec::new();
    for (i, by_area) in rtd.iter().enumerate() {
        for (h, by_drop) in by_area.iter().enumerate() {
            let nearest = (0..inst.num_dropoffs())
                .filter_map(|c| inst.arcs.res_drop.km(h, c).map(|d| (c, d)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((near, d_near)) = nearest else { continue };
            for (c, &v) in by_drop.iter().enumerate() {
                let frac = solution.value(v);
                let same_distance = inst.arcs.res_drop.km(h, c) == Some(d_near);
                if c != near && !same_distance && frac > 1e-6 {
                    out.push((
                        inst.sets.products[i].clone(),
                        inst.sets.residence_areas[h].clone(),
                        inst.sets.dropoffs[c].clone(),
                        frac,
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Minimizes `objectives[0]`, then each later objective with the earlier ones
/// held at their optima. The result's objective is that of `objectives[0]`.
///
/// Later stages only break ties; if one fails the previous point is kept.
pub fn solve_lexicographic(model: &MilpModel, objectives: &[LinExpr], solver: &dyn MilpSolver) -> Solution {
    let mut work = model.clone();
    let mut best: Option<Solution> = None;
    for (k, obj) in objectives.iter().enumerate() {
        work.set_objective(obj.clone());
        let sol = solver.solve(&work);
        if k == 0 && !sol.is_optimal() {
            return sol;
        }
        if !sol.is_optimal() {
            break;
        }
        let opt = obj.evaluate(&sol.values);
        let tol = 1e-9 * opt.abs().max(1.0);
        let mut expr = obj.clone();
        let constant = expr.constant;
        expr.constant = 0.0;
        work.add_row(format!("lex_{k}"), expr, Relation::Le, opt - constant + tol);
        best = Some(sol);
    }
    let mut sol = best.expect("first stage is optimal");
    sol.objective = objectives[0].evaluate(&sol.values);
    sol
}

/// A solved model with its evaluated stage breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolvedModel {
    pub artifacts: ModelArtifacts,
    pub solution: Solution,
    pub breakdown: Option<StageBreakdown>,
}

impl SolvedModel {
    fn new(artifacts: ModelArtifacts, solution: Solution) -> Self {
        let breakdown = artifacts.breakdown(&solution);
        Self { artifacts, solution, breakdown }
    }

    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    /// Open facilities of a tier (indices).
    pub fn open(&self, tier: FacilityTier) -> Vec<usize> {
        match self.artifacts.vars.open_indicators(tier) {
            Ok(ids) if self.solution.has_point() => {
                ids.iter().enumerate().filter(|(_, &v)| self.solution.value(v) > 0.5).map(|(k, _)| k).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Solves the system model. Ties on the chosen objective are broken by the
/// other objective.
pub fn solve_system(inst: &NetworkInstance, objective: ObjectiveKind, solver: &dyn MilpSolver) -> Result<SolvedModel> {
    let art = build_system_model(inst, objective)?;
    let primary = art.model.objective.clone();
    let secondary = match objective.other() {
        ObjectiveKind::Cost => art.stages.total_cost(),
        ObjectiveKind::Emission => art.stages.total_emission(),
    };
    let sol = solve_lexicographic(&art.model, &[primary, secondary], solver);
    Ok(SolvedModel::new(art, sol))
}

/// Drop-off terms the decentralized totals add on top of the phase-one
/// transport objective, for `metric`. Fixed cost only enters cost.
fn dropoff_remainder(inst: &NetworkInstance, vars: &VarMap, objective: ObjectiveKind) -> Result<LinExpr> {
    let m = objective.metric();
    let mut e = tier_processing(inst, vars, FacilityTier::Dropoff, m)?;
    e -= &tier_resale(inst, vars, FacilityTier::Dropoff, m)?;
    if objective == ObjectiveKind::Cost {
        e += &tier_fixed_cost(inst, vars, FacilityTier::Dropoff)?;
    }
    Ok(e)
}

/// Collected mass per (product, drop-off) from a solved collection phase.
pub fn collected_mass(inst: &NetworkInstance, vars: &VarMap, solution: &Solution) -> Result<Matrix> {
    let rtd = vars.rtd()?;
    Ok((0..inst.num_products())
        .map(|i| {
            (0..inst.num_dropoffs())
                .map(|c| (0..inst.num_areas()).map(|h| inst.supply.mass[i][h] * solution.value(rtd[i][h][c])).sum())
                .collect()
        })
        .collect())
}

/// Both phases of the decentralized formulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserSolve {
    pub collection: SolvedModel,
    pub processing: Option<SolvedModel>,
    pub collected: Option<Matrix>,
    /// Composed totals when both phases produced a point.
    pub breakdown: Option<StageBreakdown>,
}

impl UserSolve {
    /// Worst status of the two phases.
    pub fn status(&self) -> SolveStatus {
        match &self.processing {
            None => self.collection.status(),
            Some(p) if self.collection.status() == SolveStatus::Optimal => p.status(),
            Some(_) => self.collection.status(),
        }
    }
}

/// Phase-one solve with ties broken by the drop-off remainder terms and then
/// by the other objective's phase-one value.
pub fn solve_user_collection(
    inst: &NetworkInstance,
    objective: ObjectiveKind,
    solver: &dyn MilpSolver,
) -> Result<SolvedModel> {
    let art = build_user_model_i(inst, objective)?;
    let mut objectives = vec![art.model.objective.clone()];
    objectives.push(dropoff_remainder(inst, &art.vars, objective)?);
    let ex = build_user_phase_expressions(inst, &art.vars, UserPhase::Collection)?;
    let mut other = match objective.other() {
        ObjectiveKind::Cost => ex.cost,
        ObjectiveKind::Emission => ex.emission,
    };
    other += &dropoff_remainder(inst, &art.vars, objective.other())?;
    objectives.push(other);
    let sol = solve_lexicographic(&art.model, &objectives, solver);
    Ok(SolvedModel::new(art, sol))
}

pub fn solve_user_processing(
    inst: &NetworkInstance,
    rq: &Matrix,
    objective: ObjectiveKind,
    solver: &dyn MilpSolver,
) -> Result<SolvedModel> {
    let art = build_user_model_ii(inst, rq, objective)?;
    let ex = build_user_phase_expressions(inst, &art.vars, UserPhase::Processing { collected: rq })?;
    let other = match objective.other() {
        ObjectiveKind::Cost => ex.cost,
        ObjectiveKind::Emission => ex.emission,
    };
    let sol = solve_lexicographic(&art.model, &[art.model.objective.clone(), other], solver);
    Ok(SolvedModel::new(art, sol))
}

/// Phase I, then phase II on the collected masses, then composition.
pub fn solve_user(inst: &NetworkInstance, objective: ObjectiveKind, solver: &dyn MilpSolver) -> Result<UserSolve> {
    let collection = solve_user_collection(inst, objective, solver)?;
    if !collection.solution.is_optimal() {
        return Ok(UserSolve { collection, processing: None, collected: None, breakdown: None });
    }
    let rq = collected_mass(inst, &collection.artifacts.vars, &collection.solution)?;
    let processing = solve_user_processing(inst, &rq, objective, solver)?;
    let breakdown = match (&collection.breakdown, &processing.breakdown) {
        (Some(a), Some(b)) => Some(a.combined(b)),
        _ => None,
    };
    Ok(UserSolve { collection, processing: Some(processing), collected: Some(rq), breakdown })
}

/// Maps a decentralized solution onto the variables of `system` by name.
pub fn concatenate_user_solution(system: &ModelArtifacts, user: &UserSolve) -> Result<Vec<f64>> {
    let processing = user
        .processing
        .as_ref()
        .ok_or_else(|| Error::NotOptimal { what: "user processing phase".into(), status: user.status() })?;
    let mut values = vec![0.0; system.model.num_vars()];
    for (k, var) in system.model.variables.iter().enumerate() {
        let from = [&user.collection, processing]
            .into_iter()
            .find_map(|s| s.artifacts.model.var_by_name(&var.name).map(|id| s.solution.value(id)));
        values[k] = from.ok_or_else(|| Error::UnknownVariable(var.name.clone()))?;
    }
    Ok(values)
}

/// Flattened RTD and X ids of a model, in registration order.
pub fn collection_ids(vars: &VarMap) -> Result<Vec<VarId>> {
    let mut ids = flat3(vars.rtd()?);
    ids.extend(vars.x()?.iter().copied());
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::domain::{City, DropoffLocation, Distance, ExtraRow};
    use crate::milp::{solve_milp, BranchAndBound};

    fn count(art: &ModelArtifacts, prefix: &str) -> usize {
        art.model.variables.iter().filter(|v| v.name.starts_with(prefix)).count()
    }

    #[test]
    fn example_network_variable_counts() {
        let art = build_system_model(&bundled::example_network(), ObjectiveKind::Cost).unwrap();
        // I*H*C, I*C*P, J*P*S and C+P+S.
        assert_eq!(count(&art, "RTD_"), 2 * 2 * 2);
        assert_eq!(count(&art, "DTP_"), 2 * 2 * 3);
        assert_eq!(count(&art, "PTS_"), 3 * 3 * 1);
        assert_eq!(art.model.binaries().count(), 2 + 3 + 1);
        assert_eq!(art.tags.len(), art.model.num_rows());
        let labels: BTreeSet<&str> = art.tags.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels.len(), art.tags.len(), "labels are unique");
    }

    #[test]
    fn min_shipment_rows_are_emitted_with_zero_limits() {
        let inst = bundled::example_network();
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        let n = art.rows_in(TagFamily::MinShipment).count();
        assert_eq!(n, 2 * 2 + 2 * 3 + 3);
    }

    #[test]
    fn user_model_variable_groups() {
        let inst = bundled::example_network();
        let one = build_user_model_i(&inst, ObjectiveKind::Cost).unwrap();
        assert!(one.vars.dtp.is_none() && one.vars.y.is_none());
        assert_eq!(count(&one, "RTD_"), 8);
        let rq = vec![vec![2100.0, 0.0], vec![1200.0, 0.0]];
        let two = build_user_model_ii(&inst, &rq, ObjectiveKind::Cost).unwrap();
        assert!(two.vars.rtd.is_none() && two.vars.x.is_none());
        assert_eq!(count(&two, "PTS_"), 9);
    }

    #[test]
    fn inconsistent_collected_mass_is_rejected() {
        let inst = bundled::example_network();
        let rq = vec![vec![2000.0, 0.0], vec![1200.0, 0.0]];
        assert!(build_user_model_ii(&inst, &rq, ObjectiveKind::Cost).is_err());
        let neg = vec![vec![2200.0, -100.0], vec![1200.0, 0.0]];
        assert!(build_user_model_ii(&inst, &neg, ObjectiveKind::Cost).is_err());
    }

    #[test]
    fn zero_collected_mass_opens_only_the_required_minimum() {
        let mut inst = bundled::example_network();
        inst.supply.mass = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let rq = vec![vec![0.0; 2]; 2];
        let art = build_user_model_ii(&inst, &rq, ObjectiveKind::Cost).unwrap();
        let s = solve_milp(&art.model);
        assert!(s.is_optimal());
        // nof_pri = 1 at fixed cost 100, nof_sec = 1 at fixed cost 0.
        assert!((s.objective - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bcs_user_phase_one_picks_the_closest_sites() {
        let inst = bundled::example_network();
        let sol = solve_user_collection(&inst, ObjectiveKind::Cost, &BranchAndBound::default()).unwrap();
        assert!(sol.solution.is_optimal());
        let rtd = sol.artifacts.vars.rtd().unwrap();
        for i in 0..2 {
            assert!((sol.solution.value(rtd[i][0][0]) - 1.0).abs() < 1e-9);
            assert!((sol.solution.value(rtd[i][1][1]) - 1.0).abs() < 1e-9);
        }
        assert_eq!(sol.open(FacilityTier::Dropoff), vec![0, 1]);
        assert!(nearest_assignment_deviations(&inst, &sol.artifacts, &sol.solution).unwrap().is_empty());
    }

    #[test]
    fn closed_nearest_site_pushes_flow_to_the_next() {
        let mut inst = bundled::example_network();
        inst.processing.dropoff.capacity = Some(vec![vec![0.0, 1e6], vec![0.0, 1e6]]);
        let sol = solve_user_collection(&inst, ObjectiveKind::Cost, &BranchAndBound::default()).unwrap();
        let rtd = sol.artifacts.vars.rtd().unwrap();
        for i in 0..2 {
            for h in 0..2 {
                assert!((sol.solution.value(rtd[i][h][1]) - 1.0).abs() < 1e-9);
            }
        }
        let dev = nearest_assignment_deviations(&inst, &sol.artifacts, &sol.solution).unwrap();
        assert_eq!(dev.len(), 2, "area 1 deviates for both products");
    }

    #[test]
    fn forbidden_arc_has_zero_upper_bound() {
        let mut inst = bundled::example_network();
        inst.arcs.drop_pri.distance[0][2] = Distance::FORBIDDEN;
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        let dtp = art.vars.dtp().unwrap();
        assert_eq!(art.model.var(dtp[0][0][2]).upper, 0.0);
        assert_eq!(art.model.var(dtp[1][0][2]).upper, 0.0);
    }

    fn with_locations(mut inst: NetworkInstance, cities: Vec<(&str, &str)>) -> NetworkInstance {
        inst.sets.dropoff_locations = Some(
            inst.sets
                .dropoffs
                .iter()
                .zip(cities)
                .map(|(d, (city, county))| DropoffLocation { dropoff: d.clone(), city: city.into(), county: county.into() })
                .collect(),
        );
        inst.policy.siting_rules = true;
        inst
    }

    #[test]
    fn one_county_no_big_city_gives_one_row() {
        let inst = with_locations(bundled::example_network(), vec![("a", "king"), ("b", "king")]);
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        let rows: Vec<usize> = art.rows_in(TagFamily::Policy).collect();
        assert_eq!(rows.len(), 1);
        let row = &art.model.rows[rows[0]];
        assert_eq!(row.relation, Relation::Ge);
        assert_eq!(row.rhs, 1.0);
        assert_eq!(row.expr.terms.len(), 2);
    }

    #[test]
    fn county_with_two_big_cities() {
        let mut inst = with_locations(bundled::example_network(), vec![("a", "king"), ("b", "king")]);
        inst.policy.cities = vec![
            City { name: "a".into(), county: "king".into(), population: 20_000.0 },
            City { name: "b".into(), county: "king".into(), population: 15_000.0 },
            City { name: "c".into(), county: "king".into(), population: 10_000.0 },
        ];
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        let rows: Vec<&crate::milp::Row> = art.rows_in(TagFamily::Policy).map(|k| &art.model.rows[k]).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].rhs, 2.0);
        assert!(rows[1..].iter().all(|r| r.rhs == 1.0 && r.expr.terms.len() == 1));
        let s = solve_milp(&art.model);
        assert_eq!(s.status, SolveStatus::Optimal);
        let x = art.vars.x().unwrap();
        assert!(x.iter().all(|&v| s.value(v) == 1.0));
    }

    #[test]
    fn county_row_holds_for_a_small_city_site() {
        let mut inst = with_locations(bundled::example_network(), vec![("a", "king"), ("tiny", "pierce")]);
        inst.policy.cities = vec![City { name: "tiny".into(), county: "pierce".into(), population: 900.0 }];
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        let x2 = art.vars.x().unwrap()[1];
        let pierce = art.row_index("county[pierce]").unwrap();
        let row = &art.model.rows[pierce];
        assert_eq!(row.expr.terms, vec![(x2, 1.0)]);
        assert_eq!(row.rhs, 1.0);
        assert!(art.row_index("city[pierce,tiny]").is_none());
    }

    #[test]
    fn county_without_sites_is_reported() {
        let mut inst = with_locations(bundled::example_network(), vec![("a", "king"), ("b", "king")]);
        inst.policy.counties = vec!["empty".into()];
        let art = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        assert!(art.warnings.iter().any(|w| w.contains("empty")));
        assert_eq!(solve_milp(&art.model).status, SolveStatus::Infeasible);
    }

    #[test]
    fn extra_rows_resolve_names() {
        let mut inst = bundled::example_network();
        inst.policy.extra_rows = vec![ExtraRow {
            name: "both".into(),
            terms: vec![("X_1".into(), 1.0), ("X_2".into(), 1.0)],
            relation: Relation::Ge,
            rhs: 2.0,
        }];
        let sys = build_system_model(&inst, ObjectiveKind::Cost).unwrap();
        assert!(sys.row_index("extra[both]").is_some());
        let rq = vec![vec![2100.0, 0.0], vec![1200.0, 0.0]];
        let two = build_user_model_ii(&inst, &rq, ObjectiveKind::Cost).unwrap();
        assert!(two.row_index("extra[both]").is_none());
        inst.policy.extra_rows[0].terms.push(("nope".into(), 1.0));
        assert!(matches!(build_system_model(&inst, ObjectiveKind::Cost), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn tagged_dump_lists_every_row() {
        let art = build_system_model(&bundled::example_network(), ObjectiveKind::Cost).unwrap();
        let text = art.tagged_lp();
        assert_eq!(text.matches("\\ [").count(), art.model.num_rows());
        assert!(text.contains("[flow-balance] bal_res[product-1,area-1]"));
    }

    #[test]
    fn objective_kind_parses() {
        assert_eq!("cost".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::Cost);
        assert!("money".parse::<ObjectiveKind>().is_err());
    }
}
