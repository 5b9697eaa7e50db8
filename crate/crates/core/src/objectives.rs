//! Cost and emission expressions over the network decision variables, and
//! their per-stage evaluation.
//!
//! Stages follow the network: transport per arc class (res→drop, drop→pri,
//! pri→sec); processing, fixed cost and resale per facility tier.
//! `TC = transport + processing + fixed − revenue` and
//! `EM = transport + processing − offset`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{ArcClass, FacilityTier, Matrix, NetworkInstance};
use crate::error::{Error, Result};
use crate::milp::{LinExpr, MilpModel, Solution, VarId};

/// Index maps for the decision variables registered in a model. Groups that a
/// model does not carry are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarMap {
    /// `rtd[i][h][c]`: fraction of product i of area h delivered to drop-off c.
    pub rtd: Option<Vec<Vec<Vec<VarId>>>>,
    /// `dtp[i][c][p]`: kg of product i shipped from drop-off c to primary p.
    pub dtp: Option<Vec<Vec<Vec<VarId>>>>,
    /// `pts[j][p][s]`: kg of material j shipped from primary p to secondary s.
    pub pts: Option<Vec<Vec<Vec<VarId>>>>,
    pub x: Option<Vec<VarId>>,
    pub y: Option<Vec<VarId>>,
    pub r: Option<Vec<VarId>>,
}

fn cube(
    model: &mut MilpModel,
    prefix: &str,
    dims: (usize, usize, usize),
    upper: impl Fn(usize, usize, usize) -> f64,
) -> Vec<Vec<Vec<VarId>>> {
    (0..dims.0)
        .map(|a| {
            (0..dims.1)
                .map(|b| {
                    (0..dims.2)
                        .map(|c| model.add_continuous(format!("{prefix}_{}_{}_{}", a + 1, b + 1, c + 1), 0.0, upper(a, b, c)))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn binaries(model: &mut MilpModel, prefix: &str, n: usize) -> Vec<VarId> {
    (0..n).map(|k| model.add_binary(format!("{prefix}_{}", k + 1))).collect()
}

fn open_or_zero(d: Option<f64>, open_upper: f64) -> f64 {
    if d.is_some() {
        open_upper
    } else {
        0.0
    }
}

impl VarMap {
    /// Registers RTD and X (residence → drop-off decisions).
    pub fn register_collection(&mut self, model: &mut MilpModel, inst: &NetworkInstance) {
        let arcs = &inst.arcs.res_drop;
        self.rtd = Some(cube(model, "RTD", (inst.num_products(), inst.num_areas(), inst.num_dropoffs()), |_, h, c| {
            open_or_zero(arcs.km(h, c), 1.0)
        }));
        self.x = Some(binaries(model, "X", inst.num_dropoffs()));
    }

    /// Registers DTP, PTS, Y and R (drop-off → processors decisions).
    pub fn register_processing(&mut self, model: &mut MilpModel, inst: &NetworkInstance) {
        let inf = f64::INFINITY;
        let dp = &inst.arcs.drop_pri;
        self.dtp = Some(cube(model, "DTP", (inst.num_products(), inst.num_dropoffs(), inst.num_primaries()), |_, c, p| {
            open_or_zero(dp.km(c, p), inf)
        }));
        let ps = &inst.arcs.pri_sec;
        self.pts = Some(cube(model, "PTS", (inst.num_materials(), inst.num_primaries(), inst.num_secondaries()), |_, p, s| {
            open_or_zero(ps.km(p, s), inf)
        }));
        self.y = Some(binaries(model, "Y", inst.num_primaries()));
        self.r = Some(binaries(model, "R", inst.num_secondaries()));
    }

    pub fn rtd(&self) -> Result<&Vec<Vec<Vec<VarId>>>> {
        self.rtd.as_ref().ok_or(Error::MissingVariables("RTD"))
    }
    pub fn dtp(&self) -> Result<&Vec<Vec<Vec<VarId>>>> {
        self.dtp.as_ref().ok_or(Error::MissingVariables("DTP"))
    }
    pub fn pts(&self) -> Result<&Vec<Vec<Vec<VarId>>>> {
        self.pts.as_ref().ok_or(Error::MissingVariables("PTS"))
    }
    pub fn x(&self) -> Result<&Vec<VarId>> {
        self.x.as_ref().ok_or(Error::MissingVariables("X"))
    }
    pub fn y(&self) -> Result<&Vec<VarId>> {
        self.y.as_ref().ok_or(Error::MissingVariables("Y"))
    }
    pub fn r(&self) -> Result<&Vec<VarId>> {
        self.r.as_ref().ok_or(Error::MissingVariables("R"))
    }

    pub fn open_indicators(&self, tier: FacilityTier) -> Result<&Vec<VarId>> {
        match tier {
            FacilityTier::Dropoff => self.x(),
            FacilityTier::Primary => self.y(),
            FacilityTier::Secondary => self.r(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cost,
    Emission,
}

fn arc_rate(inst: &NetworkInstance, class: ArcClass, from: usize, to: usize, metric: Metric) -> f64 {
    let t = inst.arcs.table(class);
    let unit = match metric {
        Metric::Cost => t.unit_cost[from][to],
        Metric::Emission => t.unit_emission[from][to],
    };
    t.km(from, to).map_or(0.0, |d| unit * d)
}

/// res→drop transport: Σ tripMultiplier(h,c)·unit·d·RTD.
pub fn residence_transport(inst: &NetworkInstance, vars: &VarMap, metric: Metric) -> Result<LinExpr> {
    let rtd = vars.rtd()?;
    let mut e = LinExpr::new();
    for (i, by_area) in rtd.iter().enumerate() {
        let _ = i;
        for (h, by_drop) in by_area.iter().enumerate() {
            for (c, &v) in by_drop.iter().enumerate() {
                let m = inst.trip_multiplier(h, c)?;
                e.add_term(v, m * arc_rate(inst, ArcClass::ResDrop, h, c, metric));
            }
        }
    }
    Ok(e)
}

/// drop→pri transport: Σ unit·d·DTP.
pub fn dropoff_transport(inst: &NetworkInstance, vars: &VarMap, metric: Metric) -> Result<LinExpr> {
    let mut e = LinExpr::new();
    for by_drop in vars.dtp()? {
        for (c, by_pri) in by_drop.iter().enumerate() {
            for (p, &v) in by_pri.iter().enumerate() {
                e.add_term(v, arc_rate(inst, ArcClass::DropPri, c, p, metric));
            }
        }
    }
    Ok(e)
}

/// pri→sec transport: Σ unit·d·PTS.
pub fn primary_transport(inst: &NetworkInstance, vars: &VarMap, metric: Metric) -> Result<LinExpr> {
    let mut e = LinExpr::new();
    for by_pri in vars.pts()? {
        for (p, by_sec) in by_pri.iter().enumerate() {
            for (s, &v) in by_sec.iter().enumerate() {
                e.add_term(v, arc_rate(inst, ArcClass::PriSec, p, s, metric));
            }
        }
    }
    Ok(e)
}

fn unit(table: &Matrix, item: usize, facility: usize) -> f64 {
    table[item][facility]
}

/// Processing at a tier on the non-resold share of inflow. Drop-off inflow is
/// `r·RTD`, primary inflow `DTP`, secondary inflow `PTS`.
pub fn tier_processing(inst: &NetworkInstance, vars: &VarMap, tier: FacilityTier, metric: Metric) -> Result<LinExpr> {
    let t = inst.processing.tier(tier);
    let rate = |item: usize, f: usize| match metric {
        Metric::Cost => unit(&t.cost, item, f),
        Metric::Emission => unit(&t.emission, item, f),
    };
    let mut e = LinExpr::new();
    match tier {
        FacilityTier::Dropoff => {
            for (i, by_area) in vars.rtd()?.iter().enumerate() {
                for (h, by_drop) in by_area.iter().enumerate() {
                    for (c, &v) in by_drop.iter().enumerate() {
                        e.add_term(v, (1.0 - t.resale[i]) * inst.supply.mass[i][h] * rate(i, c));
                    }
                }
            }
        }
        FacilityTier::Primary => {
            for (i, by_drop) in vars.dtp()?.iter().enumerate() {
                for by_pri in by_drop {
                    for (p, &v) in by_pri.iter().enumerate() {
                        e.add_term(v, (1.0 - t.resale[i]) * rate(i, p));
                    }
                }
            }
        }
        FacilityTier::Secondary => {
            for (j, by_pri) in vars.pts()?.iter().enumerate() {
                for by_sec in by_pri {
                    for (s, &v) in by_sec.iter().enumerate() {
                        e.add_term(v, (1.0 - t.resale[j]) * rate(j, s));
                    }
                }
            }
        }
    }
    Ok(e)
}

/// Resale revenue (`Cost`) or emission offset (`Emission`) at a tier:
/// resale fraction × unit credit/offset × inflow mass.
pub fn tier_resale(inst: &NetworkInstance, vars: &VarMap, tier: FacilityTier, metric: Metric) -> Result<LinExpr> {
    let t = inst.processing.tier(tier);
    let rate = |item: usize, f: usize| match metric {
        Metric::Cost => unit(&t.credit, item, f),
        Metric::Emission => unit(&t.offset, item, f),
    };
    let mut e = LinExpr::new();
    match tier {
        FacilityTier::Dropoff => {
            for (i, by_area) in vars.rtd()?.iter().enumerate() {
                for (h, by_drop) in by_area.iter().enumerate() {
                    for (c, &v) in by_drop.iter().enumerate() {
                        e.add_term(v, t.resale[i] * inst.supply.mass[i][h] * rate(i, c));
                    }
                }
            }
        }
        FacilityTier::Primary => {
            for (i, by_drop) in vars.dtp()?.iter().enumerate() {
                for by_pri in by_drop {
                    for (p, &v) in by_pri.iter().enumerate() {
                        e.add_term(v, t.resale[i] * rate(i, p));
                    }
                }
            }
        }
        FacilityTier::Secondary => {
            for (j, by_pri) in vars.pts()?.iter().enumerate() {
                for by_sec in by_pri {
                    for (s, &v) in by_sec.iter().enumerate() {
                        e.add_term(v, t.resale[j] * rate(j, s));
                    }
                }
            }
        }
    }
    Ok(e)
}

pub fn tier_fixed_cost(inst: &NetworkInstance, vars: &VarMap, tier: FacilityTier) -> Result<LinExpr> {
    let fc = &inst.processing.tier(tier).fixed_cost;
    let mut e = LinExpr::new();
    for (k, &v) in vars.open_indicators(tier)?.iter().enumerate() {
        e.add_term(v, fc[k]);
    }
    Ok(e)
}

fn sum3(parts: [Result<LinExpr>; 3]) -> Result<LinExpr> {
    let mut out = LinExpr::new();
    for p in parts {
        out += &p?;
    }
    Ok(out)
}

/// Total transportation cost over all arc classes.
pub fn build_transport_cost(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3([
        residence_transport(inst, vars, Metric::Cost),
        dropoff_transport(inst, vars, Metric::Cost),
        primary_transport(inst, vars, Metric::Cost),
    ])
}

pub fn build_processing_cost(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3(FacilityTier::ALL.map(|t| tier_processing(inst, vars, t, Metric::Cost)))
}

pub fn build_fixed_cost(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3(FacilityTier::ALL.map(|t| tier_fixed_cost(inst, vars, t)))
}

/// Resale revenue summed over the three tiers.
pub fn build_resale_revenue(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3(FacilityTier::ALL.map(|t| tier_resale(inst, vars, t, Metric::Cost)))
}

pub fn build_transport_emission(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3([
        residence_transport(inst, vars, Metric::Emission),
        dropoff_transport(inst, vars, Metric::Emission),
        primary_transport(inst, vars, Metric::Emission),
    ])
}

pub fn build_processing_emission(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3(FacilityTier::ALL.map(|t| tier_processing(inst, vars, t, Metric::Emission)))
}

pub fn build_emission_offset(inst: &NetworkInstance, vars: &VarMap) -> Result<LinExpr> {
    sum3(FacilityTier::ALL.map(|t| tier_resale(inst, vars, t, Metric::Emission)))
}

/// Per-stage expressions. Stages whose variables are absent from the model
/// are left empty (they evaluate to zero).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageExpressions {
    pub transport_cost: [LinExpr; 3],
    pub processing_cost: [LinExpr; 3],
    pub fixed_cost: [LinExpr; 3],
    pub resale_revenue: [LinExpr; 3],
    pub transport_emission: [LinExpr; 3],
    pub processing_emission: [LinExpr; 3],
    pub emission_offset: [LinExpr; 3],
}

fn or_empty(r: Result<LinExpr>) -> Result<LinExpr> {
    match r {
        Err(Error::MissingVariables(_)) => Ok(LinExpr::new()),
        other => other,
    }
}

impl StageExpressions {
    /// Builds every stage whose variables are registered in `vars`.
    pub fn build(inst: &NetworkInstance, vars: &VarMap) -> Result<Self> {
        let mut s = StageExpressions::default();
        for (k, class) in ArcClass::ALL.into_iter().enumerate() {
            for metric in [Metric::Cost, Metric::Emission] {
                let e = or_empty(match class {
                    ArcClass::ResDrop => residence_transport(inst, vars, metric),
                    ArcClass::DropPri => dropoff_transport(inst, vars, metric),
                    ArcClass::PriSec => primary_transport(inst, vars, metric),
                })?;
                match metric {
                    Metric::Cost => s.transport_cost[k] = e,
                    Metric::Emission => s.transport_emission[k] = e,
                }
            }
        }
        for (k, tier) in FacilityTier::ALL.into_iter().enumerate() {
            s.processing_cost[k] = or_empty(tier_processing(inst, vars, tier, Metric::Cost))?;
            s.processing_emission[k] = or_empty(tier_processing(inst, vars, tier, Metric::Emission))?;
            s.resale_revenue[k] = or_empty(tier_resale(inst, vars, tier, Metric::Cost))?;
            s.emission_offset[k] = or_empty(tier_resale(inst, vars, tier, Metric::Emission))?;
            s.fixed_cost[k] = or_empty(tier_fixed_cost(inst, vars, tier))?;
        }
        Ok(s)
    }

    pub fn total_cost(&self) -> LinExpr {
        let mut e = LinExpr::new();
        for k in 0..3 {
            e += &self.transport_cost[k];
            e += &self.processing_cost[k];
            e += &self.fixed_cost[k];
            e -= &self.resale_revenue[k];
        }
        e.normalized()
    }

    pub fn total_emission(&self) -> LinExpr {
        let mut e = LinExpr::new();
        for k in 0..3 {
            e += &self.transport_emission[k];
            e += &self.processing_emission[k];
            e -= &self.emission_offset[k];
        }
        e.normalized()
    }

    pub fn evaluate(&self, values: &[f64]) -> StageBreakdown {
        let ev = |arr: &[LinExpr; 3]| arr.each_ref().map(|e| e.evaluate(values));
        StageBreakdown::from_parts(
            ev(&self.transport_cost),
            ev(&self.processing_cost),
            ev(&self.fixed_cost),
            ev(&self.resale_revenue),
            ev(&self.transport_emission),
            ev(&self.processing_emission),
            ev(&self.emission_offset),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerArc {
    pub res_drop: f64,
    pub drop_pri: f64,
    pub pri_sec: f64,
}

impl PerArc {
    fn from_array(a: [f64; 3]) -> Self {
        Self { res_drop: a[0], drop_pri: a[1], pri_sec: a[2] }
    }
    pub fn as_array(&self) -> [f64; 3] {
        [self.res_drop, self.drop_pri, self.pri_sec]
    }
    pub fn sum(&self) -> f64 {
        self.res_drop + self.drop_pri + self.pri_sec
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerTier {
    pub dropoff: f64,
    pub primary: f64,
    pub secondary: f64,
}

impl PerTier {
    fn from_array(a: [f64; 3]) -> Self {
        Self { dropoff: a[0], primary: a[1], secondary: a[2] }
    }
    pub fn as_array(&self) -> [f64; 3] {
        [self.dropoff, self.primary, self.secondary]
    }
    pub fn sum(&self) -> f64 {
        self.dropoff + self.primary + self.secondary
    }
}

/// Evaluated cost/emission per life-cycle stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageBreakdown {
    pub transport_cost: PerArc,
    pub processing_cost: PerTier,
    pub fixed_cost: PerTier,
    pub resale_revenue: PerTier,
    pub transport_emission: PerArc,
    pub processing_emission: PerTier,
    pub emission_offset: PerTier,
    pub total_cost: f64,
    pub total_emission: f64,
}

impl StageBreakdown {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        tc: [f64; 3],
        pc: [f64; 3],
        fc: [f64; 3],
        rev: [f64; 3],
        te: [f64; 3],
        pe: [f64; 3],
        off: [f64; 3],
    ) -> Self {
        let mut b = StageBreakdown {
            transport_cost: PerArc::from_array(tc),
            processing_cost: PerTier::from_array(pc),
            fixed_cost: PerTier::from_array(fc),
            resale_revenue: PerTier::from_array(rev),
            transport_emission: PerArc::from_array(te),
            processing_emission: PerTier::from_array(pe),
            emission_offset: PerTier::from_array(off),
            total_cost: 0.0,
            total_emission: 0.0,
        };
        b.recompute_totals();
        b
    }

    fn recompute_totals(&mut self) {
        self.total_cost =
            self.transport_cost.sum() + self.processing_cost.sum() + self.fixed_cost.sum() - self.resale_revenue.sum();
        self.total_emission = self.transport_emission.sum() + self.processing_emission.sum() - self.emission_offset.sum();
    }

    /// Stage-wise sum, used to join the two user-optimum phases.
    pub fn combined(&self, other: &StageBreakdown) -> StageBreakdown {
        let add3 = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        StageBreakdown::from_parts(
            add3(self.transport_cost.as_array(), other.transport_cost.as_array()),
            add3(self.processing_cost.as_array(), other.processing_cost.as_array()),
            add3(self.fixed_cost.as_array(), other.fixed_cost.as_array()),
            add3(self.resale_revenue.as_array(), other.resale_revenue.as_array()),
            add3(self.transport_emission.as_array(), other.transport_emission.as_array()),
            add3(self.processing_emission.as_array(), other.processing_emission.as_array()),
            add3(self.emission_offset.as_array(), other.emission_offset.as_array()),
        )
    }

    /// One `(stage, metric, value)` record per entry, totals last.
    pub fn records(&self) -> Vec<(String, &'static str, f64)> {
        let mut out = Vec::new();
        for (k, class) in ArcClass::ALL.iter().enumerate() {
            out.push((class.label().to_string(), "transport_cost", self.transport_cost.as_array()[k]));
            out.push((class.label().to_string(), "transport_emission", self.transport_emission.as_array()[k]));
        }
        for (k, tier) in FacilityTier::ALL.iter().enumerate() {
            let l = tier.label().to_string();
            out.push((l.clone(), "processing_cost", self.processing_cost.as_array()[k]));
            out.push((l.clone(), "fixed_cost", self.fixed_cost.as_array()[k]));
            out.push((l.clone(), "resale_revenue", self.resale_revenue.as_array()[k]));
            out.push((l.clone(), "processing_emission", self.processing_emission.as_array()[k]));
            out.push((l, "emission_offset", self.emission_offset.as_array()[k]));
        }
        out.push(("total".into(), "total_cost", self.total_cost));
        out.push(("total".into(), "total_emission", self.total_emission));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,metric,value\n");
        for (stage, metric, v) in self.records() {
            let _ = writeln!(out, "{stage},{metric},{v}");
        }
        out
    }
}

/// Which half of the decentralized (user-optimum) formulation.
#[derive(Debug, Clone, Copy)]
pub enum UserPhase<'a> {
    /// Residence → drop-off assignment.
    Collection,
    /// Drop-off → processors routing of the collected masses `rq[i][c]`.
    Processing { collected: &'a Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseExpressions {
    pub cost: LinExpr,
    pub emission: LinExpr,
}

/// Objective expressions of one user-optimum phase.
///
/// The collection phase minimizes residence→drop-off transport only; the
/// processing phase carries transport, processing, fixed cost and resale of
/// the primary and secondary tiers plus drop-off→primary transport.
pub fn build_user_phase_expressions(inst: &NetworkInstance, vars: &VarMap, phase: UserPhase<'_>) -> Result<PhaseExpressions> {
    match phase {
        UserPhase::Collection => Ok(PhaseExpressions {
            cost: residence_transport(inst, vars, Metric::Cost)?,
            emission: residence_transport(inst, vars, Metric::Emission)?,
        }),
        UserPhase::Processing { collected } => {
            if collected.len() != inst.num_products() || collected.iter().any(|r| r.len() != inst.num_dropoffs()) {
                return Err(Error::Config("collected quantities must be a products x drop-offs matrix".into()));
            }
            let mut cost = dropoff_transport(inst, vars, Metric::Cost)?;
            cost += &primary_transport(inst, vars, Metric::Cost)?;
            let mut emission = dropoff_transport(inst, vars, Metric::Emission)?;
            emission += &primary_transport(inst, vars, Metric::Emission)?;
            for tier in [FacilityTier::Primary, FacilityTier::Secondary] {
                cost += &tier_processing(inst, vars, tier, Metric::Cost)?;
                cost += &tier_fixed_cost(inst, vars, tier)?;
                cost -= &tier_resale(inst, vars, tier, Metric::Cost)?;
                emission += &tier_processing(inst, vars, tier, Metric::Emission)?;
                emission -= &tier_resale(inst, vars, tier, Metric::Emission)?;
            }
            Ok(PhaseExpressions { cost: cost.normalized(), emission: emission.normalized() })
        }
    }
}

/// Totals of the decentralized formulation: both phase optima plus the
/// drop-off fixed cost, processing and resale evaluated on the phase-one
/// assignment.
pub fn compose_user_totals(
    inst: &NetworkInstance,
    collection: (&VarMap, &Solution),
    processing: (&VarMap, &Solution),
) -> Result<StageBreakdown> {
    for (what, sol) in [("user collection phase", collection.1), ("user processing phase", processing.1)] {
        if !sol.is_optimal() {
            return Err(Error::NotOptimal { what: what.into(), status: sol.status });
        }
    }
    let first = StageExpressions::build(inst, collection.0)?.evaluate(&collection.1.values);
    let second = StageExpressions::build(inst, processing.0)?.evaluate(&processing.1.values);
    Ok(first.combined(&second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::domain::Distance;

    fn system_vars(inst: &NetworkInstance) -> (MilpModel, VarMap) {
        let mut m = MilpModel::new("t");
        let mut v = VarMap::default();
        v.register_collection(&mut m, inst);
        v.register_processing(&mut m, inst);
        (m, v)
    }

    #[test]
    fn zero_point_evaluates_to_zero() {
        let inst = bundled::example_network();
        let (m, vars) = system_vars(&inst);
        let zeros = vec![0.0; m.num_vars()];
        let b = StageExpressions::build(&inst, &vars).unwrap().evaluate(&zeros);
        assert_eq!(b, StageBreakdown::default());
        for e in [
            build_transport_cost(&inst, &vars).unwrap(),
            build_processing_cost(&inst, &vars).unwrap(),
            build_fixed_cost(&inst, &vars).unwrap(),
            build_resale_revenue(&inst, &vars).unwrap(),
            build_transport_emission(&inst, &vars).unwrap(),
            build_processing_emission(&inst, &vars).unwrap(),
            build_emission_offset(&inst, &vars).unwrap(),
        ] {
            assert_eq!(e.evaluate(&zeros), 0.0);
        }
    }

    #[test]
    fn single_arc_drop_to_primary_term() {
        // 1 kg of product 1 over 100 km at 0.115 $/kg-km.
        let mut inst = bundled::example_network();
        inst.arcs.drop_pri.distance[0][0] = Distance::km(100.0);
        let (m, vars) = system_vars(&inst);
        let mut x = vec![0.0; m.num_vars()];
        x[vars.dtp.as_ref().unwrap()[0][0][0].0] = 1.0;
        let e = dropoff_transport(&inst, &vars, Metric::Cost).unwrap();
        assert!((e.evaluate(&x) - 11.5).abs() < 1e-12);
    }

    #[test]
    fn missing_group_is_an_error() {
        let inst = bundled::example_network();
        let mut m = MilpModel::new("t");
        let mut vars = VarMap::default();
        vars.register_collection(&mut m, &inst);
        assert!(matches!(build_transport_cost(&inst, &vars), Err(Error::MissingVariables("DTP"))));
        // Partial stage build is fine.
        assert!(StageExpressions::build(&inst, &vars).is_ok());
    }

    #[test]
    fn collection_phase_single_term() {
        let inst = bundled::example_network();
        let mut m = MilpModel::new("t");
        let mut vars = VarMap::default();
        vars.register_collection(&mut m, &inst);
        let mut x = vec![0.0; m.num_vars()];
        x[vars.rtd.as_ref().unwrap()[0][0][0].0] = 1.0;
        let ex = build_user_phase_expressions(&inst, &vars, UserPhase::Collection).unwrap();
        let expected = inst.trip_multiplier(0, 0).unwrap() * 0.348 * 100.0;
        assert!((ex.cost.evaluate(&x) - expected).abs() < 1e-9);
    }

    #[test]
    fn processing_phase_zero_flows() {
        let inst = bundled::example_network();
        let mut m = MilpModel::new("t");
        let mut vars = VarMap::default();
        vars.register_processing(&mut m, &inst);
        let rq = vec![vec![0.0; 2]; 2];
        let ex = build_user_phase_expressions(&inst, &vars, UserPhase::Processing { collected: &rq }).unwrap();
        let zeros = vec![0.0; m.num_vars()];
        assert_eq!(ex.cost.evaluate(&zeros), 0.0);
        assert_eq!(ex.emission.evaluate(&zeros), 0.0);
        let bad = vec![vec![0.0; 3]; 2];
        assert!(build_user_phase_expressions(&inst, &vars, UserPhase::Processing { collected: &bad }).is_err());
    }

    #[test]
    fn breakdown_csv_has_one_row_per_entry() {
        let b = StageBreakdown::default();
        let csv = b.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6 + 15 + 2);
    }
}
