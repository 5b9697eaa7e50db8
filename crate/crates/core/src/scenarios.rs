//! Scenario engine: instance overrides, calibration of the trip multiplier,
//! solving the requested model families and comparison reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builders::{build_system_model, solve_system, solve_user, ObjectiveKind, SolvedModel};
use crate::domain::{FacilityTier, Matrix, NetworkInstance};
use crate::error::{Error, Result};
use crate::milp::{MilpSolver, Solution, SolveStatus};
use crate::multiobjective::{epsilon_sweep, BiObjective, UserFamily, DEFAULT_GRID, DEFAULT_THETA};
use crate::objectives::{StageBreakdown, VarMap};
use crate::robust::{capacity_preset, gamma_ramp, RampPoint, UncertaintySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    System,
    User,
    #[default]
    Both,
}

impl ModelSelection {
    pub fn system(self) -> bool {
        matches!(self, ModelSelection::System | ModelSelection::Both)
    }
    pub fn user(self) -> bool {
        matches!(self, ModelSelection::User | ModelSelection::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveSelection {
    Cost,
    Emission,
    Pareto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityScale {
    pub tier: FacilityTier,
    /// Facility identifier; all facilities of the tier when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility: Option<String>,
    pub factor: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub capacity_scale: Vec<CapacityScale>,
    /// Aggregate capacity of every primary as a fraction of the base-case
    /// inflow of the most used primary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_total_capacity_fraction: Option<f64>,
    /// Replacement supply table `mass[i][h]`, kg.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_mix: Option<Matrix>,
    /// Multiplies area populations (or the lumped household factor).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trips_per_year: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSettings {
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_theta() -> f64 {
    DEFAULT_THETA
}

impl Default for ParetoSettings {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, theta: DEFAULT_THETA }
    }
}

/// Γ ramp on the system model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSettings {
    /// Uncertainty spec file, relative to the scenario file. Without it the
    /// capacity preset is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default = "default_relative")]
    pub relative_deviation: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_relative() -> f64 {
    0.1
}
fn default_steps() -> usize {
    5
}

fn default_objectives() -> Vec<ObjectiveSelection> {
    vec![ObjectiveSelection::Cost, ObjectiveSelection::Emission]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Base instance file; the suite base (or the bundled example) otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub models: ModelSelection,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<ObjectiveSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto: Option<ParetoSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustSettings>,
    /// Base-case throughput to scale primary capacity from; derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_throughput_kg: Option<f64>,
}

impl ScenarioSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base: None,
            overrides: Overrides::default(),
            models: ModelSelection::Both,
            objectives: default_objectives(),
            pareto: None,
            robust: None,
            base_throughput_kg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    /// Scenario whose system-optimum total cost is matched.
    pub scenario: String,
    pub target_total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTarget>,
    pub scenarios: Vec<ScenarioSpec>,
}

impl ScenarioSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a suite file, or a single scenario file as a one-entry suite.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let suite = if value.get("scenarios").is_some() {
            serde_json::from_value(value)?
        } else {
            let spec: ScenarioSpec = serde_json::from_value(value)?;
            ScenarioSuite { name: spec.name.clone(), base: spec.base.clone(), calibration: None, scenarios: vec![spec] }
        };
        Ok((suite, dir))
    }
}

/// Values `materialize` needs beyond the spec itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterializeContext {
    pub base_throughput: Option<f64>,
    /// Calibrated multiplier on the household factor.
    pub trip_scale: f64,
}

impl Default for MaterializeContext {
    fn default() -> Self {
        Self { base_throughput: None, trip_scale: 1.0 }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Scenario(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Multiplies the household factor of every area by `k`.
pub fn scale_household_factor(inst: &mut NetworkInstance, k: f64) {
    if k == 1.0 {
        return;
    }
    let n = inst.num_areas();
    match &mut inst.supply.population {
        Some(pp) => pp.iter_mut().for_each(|p| *p *= k),
        None => {
            let l = inst.supply.lumped_multiplier.get_or_insert_with(|| vec![1.0; n]);
            l.iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Applies the spec's overrides to `base`.
pub fn materialize(spec: &ScenarioSpec, base: &NetworkInstance, ctx: &MaterializeContext) -> Result<NetworkInstance> {
    let mut inst = base.clone();
    inst.scenario.name = spec.name.clone();
    let o = &spec.overrides;

    if let Some(mix) = &o.product_mix {
        if mix.len() != inst.num_products() || mix.iter().any(|r| r.len() != inst.num_areas()) {
            return Err(Error::Scenario("product_mix must be a products x areas table".into()));
        }
        inst.supply.mass = mix.clone();
    }
    if let Some(k) = o.population_scale {
        positive("population_scale", k)?;
        scale_household_factor(&mut inst, k);
    }
    if let Some(ty) = o.trips_per_year {
        if !(ty >= 0.0) {
            return Err(Error::Scenario("trips_per_year must be >= 0".into()));
        }
        inst.supply.trips_per_year = ty;
    }
    scale_household_factor(&mut inst, ctx.trip_scale);

    for cs in &o.capacity_scale {
        positive("capacity scale factor", cs.factor)?;
        let facilities: Vec<usize> = match &cs.facility {
            None => (0..inst.facilities(cs.tier).len()).collect(),
            Some(id) => vec![inst.facilities(cs.tier).iter().position(|f| f == id).ok_or_else(|| {
                Error::Scenario(format!("unknown {} facility `{id}`", cs.tier.label()))
            })?],
        };
        let t = inst.processing.tier_mut(cs.tier);
        for &f in &facilities {
            if let Some(cap) = &mut t.capacity {
                cap.iter_mut().for_each(|row| row[f] *= cs.factor);
            }
            if let Some(tc) = &mut t.total_capacity {
                tc[f] *= cs.factor;
            }
        }
    }

    if let Some(frac) = o.primary_total_capacity_fraction {
        positive("primary_total_capacity_fraction", frac)?;
        let thr = spec
            .base_throughput_kg
            .or(ctx.base_throughput)
            .ok_or_else(|| Error::Scenario(format!("{}: base throughput unknown", spec.name)))?;
        let n = inst.num_primaries();
        inst.processing.primary.total_capacity = Some(vec![frac * thr; n]);
    }
    inst.validate().into_result()?;
    Ok(inst)
}

/// Inflow per facility and item, kg: `tiers[tier][facility][item]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub tiers: [Vec<Vec<f64>>; 3],
}

impl Throughput {
    pub fn facility_total(&self, tier: FacilityTier, facility: usize) -> f64 {
        self.tiers[tier as usize][facility].iter().sum()
    }

    pub fn totals(&self, tier: FacilityTier) -> Vec<f64> {
        (0..self.tiers[tier as usize].len()).map(|f| self.facility_total(tier, f)).collect()
    }

    /// Most used facility of a tier; ties go to the lowest index.
    pub fn most_utilized(&self, tier: FacilityTier) -> Option<(usize, f64)> {
        self.totals(tier).into_iter().enumerate().fold(None, |best, (f, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((f, v)),
        })
    }

    fn merge(&mut self, other: &Throughput) {
        for (k, t) in other.tiers.iter().enumerate() {
            if !t.is_empty() {
                self.tiers[k] = t.clone();
            }
        }
    }
}

/// Inflows from the flow variables present in `vars`.
pub fn derive_throughput(inst: &NetworkInstance, vars: &VarMap, solution: &Solution) -> Throughput {
    let mut t = Throughput::default();
    if !solution.has_point() {
        return t;
    }
    if let Some(rtd) = &vars.rtd {
        t.tiers[0] = (0..inst.num_dropoffs())
            .map(|c| {
                (0..inst.num_products())
                    .map(|i| (0..inst.num_areas()).map(|h| inst.supply.mass[i][h] * solution.value(rtd[i][h][c])).sum())
                    .collect()
            })
            .collect();
    }
    if let Some(dtp) = &vars.dtp {
        t.tiers[1] = (0..inst.num_primaries())
            .map(|p| (0..inst.num_products()).map(|i| dtp[i].iter().map(|by| solution.value(by[p])).sum()).collect())
            .collect();
    }
    if let Some(pts) = &vars.pts {
        t.tiers[2] = (0..inst.num_secondaries())
            .map(|s| (0..inst.num_materials()).map(|j| pts[j].iter().map(|by| solution.value(by[s])).sum()).collect())
            .collect();
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub variable: String,
    pub value: f64,
}

/// One solved model family under one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    /// `system` or `user`.
    pub model: String,
    pub objective: ObjectiveKind,
    pub status: SolveStatus,
    pub breakdown: Option<StageBreakdown>,
    /// Open facility identifiers per tier.
    pub open: [Vec<String>; 3],
    pub flows: Vec<FlowRecord>,
    pub throughput: Throughput,
}

fn open_ids(inst: &NetworkInstance, solved: &SolvedModel, tier: FacilityTier) -> Vec<String> {
    solved.open(tier).into_iter().map(|k| inst.facilities(tier)[k].clone()).collect()
}

fn flows_of(solved: &SolvedModel) -> Vec<FlowRecord> {
    solved
        .solution
        .nonzeros(&solved.artifacts.model, 1e-9)
        .filter(|(name, _)| !name.starts_with(['X', 'Y', 'R']) || name.starts_with("RTD"))
        .map(|(name, value)| FlowRecord { variable: name.to_string(), value })
        .collect()
}

/// Solves the system model and packs it into a run record.
pub fn run_system(inst: &NetworkInstance, objective: ObjectiveKind, solver: &dyn MilpSolver) -> Result<ModelRun> {
    let s = solve_system(inst, objective, solver)?;
    Ok(ModelRun {
        model: "system".into(),
        objective,
        status: s.status(),
        breakdown: s.breakdown,
        open: FacilityTier::ALL.map(|t| open_ids(inst, &s, t)),
        flows: flows_of(&s),
        throughput: derive_throughput(inst, &s.artifacts.vars, &s.solution),
    })
}

/// Solves both user phases and packs the composed result.
pub fn run_user(inst: &NetworkInstance, objective: ObjectiveKind, solver: &dyn MilpSolver) -> Result<ModelRun> {
    let u = solve_user(inst, objective, solver)?;
    let mut open = [open_ids(inst, &u.collection, FacilityTier::Dropoff), Vec::new(), Vec::new()];
    let mut flows = flows_of(&u.collection);
    let mut throughput = derive_throughput(inst, &u.collection.artifacts.vars, &u.collection.solution);
    if let Some(p) = &u.processing {
        open[1] = open_ids(inst, p, FacilityTier::Primary);
        open[2] = open_ids(inst, p, FacilityTier::Secondary);
        flows.extend(flows_of(p));
        throughput.merge(&derive_throughput(inst, &p.artifacts.vars, &p.solution));
    }
    Ok(ModelRun { model: "user".into(), objective, status: u.status(), breakdown: u.breakdown, open, flows, throughput })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub model: String,
    pub v: usize,
    pub epsilon: f64,
    pub total_cost: f64,
    pub total_emission: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub runs: Vec<ModelRun>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pareto: Vec<FrontRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robust: Vec<RampPoint>,
    /// Problems that did not stop the run (skipped grid points and the like).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ScenarioReport {
    pub fn run(&self, model: &str, objective: ObjectiveKind) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.model == model && r.objective == objective)
    }
}

/// Solves what the spec asks for on an already materialized instance.
pub fn run_materialized(
    spec: &ScenarioSpec,
    inst: &NetworkInstance,
    base_dir: &Path,
    solver: &dyn MilpSolver,
) -> Result<ScenarioReport> {
    let mut report =
        ScenarioReport { scenario: spec.name.clone(), runs: Vec::new(), pareto: Vec::new(), robust: Vec::new(), notes: Vec::new() };
    for sel in &spec.objectives {
        let objective = match sel {
            ObjectiveSelection::Cost => ObjectiveKind::Cost,
            ObjectiveSelection::Emission => ObjectiveKind::Emission,
            ObjectiveSelection::Pareto => continue,
        };
        if spec.models.system() {
            report.runs.push(run_system(inst, objective, solver)?);
        }
        if spec.models.user() {
            report.runs.push(run_user(inst, objective, solver)?);
        }
    }
    if spec.objectives.contains(&ObjectiveSelection::Pareto) {
        let settings = spec.pareto.clone().unwrap_or_default();
        let mut fronts = Vec::new();
        if spec.models.system() {
            let fam = BiObjective::system(inst)?;
            fronts.push(("system", epsilon_sweep(&fam, settings.grid, settings.theta, solver)?));
        }
        if spec.models.user() {
            let fam = UserFamily { instance: inst };
            fronts.push(("user", epsilon_sweep(&fam, settings.grid, settings.theta, solver)?));
        }
        for (model, front) in fronts {
            for v in &front.skipped {
                report.notes.push(format!("{model} pareto grid point {v} has no solution"));
            }
            report.pareto.extend(front.points.iter().map(|p| FrontRow {
                model: model.into(),
                v: p.v,
                epsilon: p.epsilon,
                total_cost: p.total_cost,
                total_emission: p.total_emission,
            }));
        }
    }
    if let Some(rs) = &spec.robust {
        let art = build_system_model(inst, ObjectiveKind::Cost)?;
        let uspec = match &rs.spec {
            Some(file) => UncertaintySpec::from_json(&std::fs::read_to_string(base_dir.join(file))?)?,
            None => capacity_preset(&art, rs.relative_deviation, 1.0),
        };
        report.robust = gamma_ramp(&art, &uspec, rs.steps, solver)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub multiplier: f64,
    pub target: f64,
    pub achieved: f64,
    pub iterations: usize,
}

/// Finds the factor on the household term of the trip multiplier for which
/// the system-optimum total cost equals `target`.
///
/// The optimum is concave, piecewise linear and non-decreasing in the
/// factor, so Newton steps on the slope of the current optimal solution
/// converge in a few iterations; bisection takes over if a step misbehaves.
pub fn calibrate_trip_multiplier(
    inst: &NetworkInstance,
    target: f64,
    solver: &dyn MilpSolver,
) -> Result<CalibrationResult> {
    let eval = |k: f64| -> Result<(f64, f64)> {
        let mut scaled = inst.clone();
        scale_household_factor(&mut scaled, k);
        let s = solve_system(&scaled, ObjectiveKind::Cost, solver)?;
        let b = s
            .breakdown
            .filter(|_| s.solution.is_optimal())
            .ok_or(Error::NotOptimal { what: "calibration solve".into(), status: s.status() })?;
        // Residence transport is linear in k at a fixed solution.
        let slope = if k > 0.0 { b.transport_cost.res_drop / k } else { 0.0 };
        Ok((b.total_cost, slope))
    };
    let tol = 1e-7 * target.abs().max(1.0);
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut k = 1.0;
    for iter in 1..=60 {
        let (tc, slope) = eval(k)?;
        let f = tc - target;
        if f.abs() <= tol {
            return Ok(CalibrationResult { multiplier: k, target, achieved: tc, iterations: iter });
        }
        if f > 0.0 {
            hi = Some(k);
        } else {
            lo = Some(k);
        }
        let newton = if slope > 0.0 { Some(k - f / slope) } else { None };
        k = match (newton, lo, hi) {
            (Some(n), Some(l), Some(h)) if n > l && n < h => n,
            (Some(n), None, Some(_)) if n >= 0.0 => n,
            (Some(n), Some(_), None) => n,
            (_, Some(l), Some(h)) => 0.5 * (l + h),
            (_, None, Some(h)) => 0.5 * h,
            (_, Some(l), None) => 2.0 * l.max(1e-3),
            (_, None, None) => unreachable!("one side is set"),
        };
        if let (Some(l), Some(h)) = (lo, hi) {
            if h - l < 1e-12 * h.max(1.0) {
                let (tc, _) = eval(k)?;
                return Ok(CalibrationResult { multiplier: k, target, achieved: tc, iterations: iter });
            }
        }
    }
    Err(Error::Scenario(format!("calibration to {target} did not converge")))
}

/// Difference of a run's totals against the same run in the first scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub scenario: String,
    pub model: String,
    pub objective: ObjectiveKind,
    pub total_cost: f64,
    pub total_emission: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub suite: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_throughput_kg: Option<f64>,
    pub scenarios: Vec<ScenarioReport>,
    pub deltas: Vec<Delta>,
}

impl ComparisonReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.scenario == name)
    }

    /// Worst status over every run, for exit codes.
    pub fn worst_status(&self) -> SolveStatus {
        let rank = |s: SolveStatus| match s {
            SolveStatus::Optimal => 0,
            SolveStatus::BudgetExceeded => 1,
            SolveStatus::NumericallyUnstable => 2,
            SolveStatus::Unbounded => 3,
            SolveStatus::Infeasible => 4,
        };
        self.scenarios
            .iter()
            .flat_map(|s| s.runs.iter().map(|r| r.status))
            .max_by_key(|&s| rank(s))
            .unwrap_or(SolveStatus::Optimal)
    }

    /// `scenario,model,objective,status,fixed_cost,revenue,total_cost,offset,total_emission`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scenario,model,objective,status,fixed_cost,revenue,total_cost,offset,total_emission\n");
        for s in &self.scenarios {
            for r in &s.runs {
                let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                match &r.breakdown {
                    Some(b) => {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{},{},{},{}",
                            s.scenario,
                            r.model,
                            r.objective,
                            status,
                            b.fixed_cost.sum(),
                            b.resale_revenue.sum(),
                            b.total_cost,
                            b.emission_offset.sum(),
                            b.total_emission
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{},{},{},{},,,,,", s.scenario, r.model, r.objective, status);
                    }
                }
            }
        }
        out
    }

    /// Human-readable summary; numbers rounded to whole units.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "suite: {}", self.suite);
        if let Some(c) = &self.calibration {
            let _ = writeln!(out, "calibration: household factor {:.6} (target {:.0}, achieved {:.0})", c.multiplier, c.target, c.achieved);
        }
        if let Some(t) = self.base_throughput_kg {
            let _ = writeln!(out, "base throughput of the most used primary: {t:.1} kg");
        }
        for s in &self.scenarios {
            let _ = writeln!(out, "\n[{}]", s.scenario);
            for r in &s.runs {
                let _ = write!(out, "  {:<6} {:<8} {:?}", r.model, r.objective.label(), r.status);
                if let Some(b) = &r.breakdown {
                    let _ = write!(
                        out,
                        "  fixed {:.0}  revenue {:.0}  total cost {:.0}  offset {:.0}  total emission {:.0}",
                        b.fixed_cost.sum(),
                        b.resale_revenue.sum(),
                        b.total_cost,
                        b.emission_offset.sum(),
                        b.total_emission
                    );
                }
                let _ = writeln!(out);
                let _ = writeln!(out, "         open: drop-off {:?} primary {:?} secondary {:?}", r.open[0], r.open[1], r.open[2]);
            }
            for p in &s.pareto {
                let _ = writeln!(out, "  pareto {} v={} eps={:.0} cost {:.0} emission {:.0}", p.model, p.v, p.epsilon, p.total_cost, p.total_emission);
            }
            for p in &s.robust {
                let _ = writeln!(out, "  robust gamma fraction {:.2}: {:?} {:.0}", p.fraction, p.status, p.objective);
            }
            for n in &s.notes {
                let _ = writeln!(out, "  note: {n}");
            }
        }
        out
    }

    /// Writes summary, per-run breakdowns, flows, throughput, fronts, text
    /// and JSON reports into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut flows = String::from("scenario,model,objective,variable,value\n");
        let mut thr = String::from("scenario,model,objective,tier,facility,item,kg\n");
        let mut fronts = String::from("scenario,model,v,epsilon,total_cost,total_emission\n");
        for s in &self.scenarios {
            for r in &s.runs {
                if let Some(b) = &r.breakdown {
                    let file = format!("breakdown_{}_{}_{}.csv", sanitize(&s.scenario), r.model, r.objective);
                    std::fs::write(dir.join(file), b.to_csv())?;
                }
                for f in &r.flows {
                    let _ = writeln!(flows, "{},{},{},{},{}", s.scenario, r.model, r.objective, f.variable, f.value);
                }
                for tier in FacilityTier::ALL {
                    for (f, items) in r.throughput.tiers[tier as usize].iter().enumerate() {
                        for (k, kg) in items.iter().enumerate() {
                            let _ = writeln!(thr, "{},{},{},{},{},{},{}", s.scenario, r.model, r.objective, tier.label(), f + 1, k + 1, kg);
                        }
                    }
                }
            }
            for p in &s.pareto {
                let _ = writeln!(fronts, "{},{},{},{},{},{}", s.scenario, p.model, p.v, p.epsilon, p.total_cost, p.total_emission);
            }
        }
        std::fs::write(dir.join("flows.csv"), flows)?;
        std::fs::write(dir.join("throughput.csv"), thr)?;
        if self.scenarios.iter().any(|s| !s.pareto.is_empty()) {
            std::fs::write(dir.join("pareto.csv"), fronts)?;
        }
        Ok(())
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Inflow of the most used primary in the system cost optimum of `inst`.
pub fn base_throughput(inst: &NetworkInstance, solver: &dyn MilpSolver) -> Result<f64> {
    let run = run_system(inst, ObjectiveKind::Cost, solver)?;
    if run.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal { what: "base throughput solve".into(), status: run.status });
    }
    Ok(run.throughput.most_utilized(FacilityTier::Primary).map_or(0.0, |(_, v)| v))
}

fn base_for<'a>(
    reference: Option<&String>,
    default: &'a NetworkInstance,
    base_dir: &Path,
) -> Result<std::borrow::Cow<'a, NetworkInstance>> {
    Ok(match reference {
        Some(path) => std::borrow::Cow::Owned(NetworkInstance::load(base_dir.join(path))?),
        None => std::borrow::Cow::Borrowed(default),
    })
}

/// Calibrates (when the suite asks for it), derives the base throughput and
/// runs every scenario.
pub fn run_suite(
    suite: &ScenarioSuite,
    default_base: &NetworkInstance,
    base_dir: &Path,
    solver: &dyn MilpSolver,
) -> Result<ComparisonReport> {
    let suite_base = base_for(suite.base.as_ref(), default_base, base_dir)?.into_owned();
    let mut ctx = MaterializeContext::default();
    let mut calibration = None;
    if let Some(cal) = &suite.calibration {
        let spec = suite
            .scenarios
            .iter()
            .find(|s| s.name == cal.scenario)
            .ok_or_else(|| Error::Scenario(format!("calibration scenario `{}` not in suite", cal.scenario)))?;
        let base = base_for(spec.base.as_ref(), &suite_base, base_dir)?;
        let inst = materialize(spec, &base, &MaterializeContext { base_throughput: Some(0.0), trip_scale: 1.0 })?;
        let c = calibrate_trip_multiplier(&inst, cal.target_total_cost, solver)?;
        ctx.trip_scale = c.multiplier;
        calibration = Some(c);
    }
    let needs_throughput = suite
        .scenarios
        .iter()
        .any(|s| s.overrides.primary_total_capacity_fraction.is_some() && s.base_throughput_kg.is_none());
    if needs_throughput {
        let mut inst = suite_base.clone();
        scale_household_factor(&mut inst, ctx.trip_scale);
        ctx.base_throughput = Some(base_throughput(&inst, solver)?);
    }

    let mut scenarios = Vec::new();
    for spec in &suite.scenarios {
        let base = base_for(spec.base.as_ref(), &suite_base, base_dir)?;
        let inst = materialize(spec, &base, &ctx)?;
        scenarios.push(run_materialized(spec, &inst, base_dir, solver)?);
    }

    let mut deltas = Vec::new();
    if let Some(first) = scenarios.first() {
        for s in &scenarios[1..] {
            for r in &s.runs {
                let (Some(b), Some(Some(b0))) =
                    (&r.breakdown, first.run(&r.model, r.objective).map(|f| f.breakdown.as_ref()))
                else {
                    continue;
                };
                deltas.push(Delta {
                    scenario: s.scenario.clone(),
                    model: r.model.clone(),
                    objective: r.objective,
                    total_cost: b.total_cost - b0.total_cost,
                    total_emission: b.total_emission - b0.total_emission,
                });
            }
        }
    }
    Ok(ComparisonReport { suite: suite.name.clone(), calibration, base_throughput_kg: ctx.base_throughput, scenarios, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::milp::BranchAndBound;

    #[test]
    fn bcs_is_the_base_instance() {
        let base = bundled::example_network();
        let inst = materialize(&ScenarioSpec::named(base.scenario.name.clone()), &base, &MaterializeContext::default()).unwrap();
        assert_eq!(inst, base);
    }

    #[test]
    fn tcs_scales_from_the_given_throughput() {
        let base = bundled::example_network();
        let mut spec = ScenarioSpec::named("TCS-80%");
        spec.overrides.primary_total_capacity_fraction = Some(0.8);
        spec.base_throughput_kg = Some(2780.0);
        let inst = materialize(&spec, &base, &MaterializeContext::default()).unwrap();
        let caps = inst.processing.primary.total_capacity.unwrap();
        assert_eq!(caps.len(), 3);
        assert!(caps.iter().all(|&c| (c - 2224.0).abs() < 1e-9));
        spec.base_throughput_kg = None;
        assert!(materialize(&spec, &base, &MaterializeContext::default()).is_err());
    }

    #[test]
    fn pms_one_mix() {
        let suite = bundled::example_suite();
        let spec = suite.scenarios.iter().find(|s| s.name == "PMS-1").unwrap();
        let inst = materialize(spec, &bundled::example_network(), &MaterializeContext::default()).unwrap();
        // Area 1 holds 600/600, area 2 holds 1050/1050.
        assert_eq!(inst.supply.mass, vec![vec![600.0, 1050.0], vec![600.0, 1050.0]]);
    }

    #[test]
    fn override_errors() {
        let base = bundled::example_network();
        let mut spec = ScenarioSpec::named("bad");
        spec.overrides.capacity_scale =
            vec![CapacityScale { tier: FacilityTier::Primary, facility: Some("pri-9".into()), factor: 0.5 }];
        assert!(materialize(&spec, &base, &MaterializeContext::default()).is_err());
        spec.overrides.capacity_scale[0].facility = None;
        spec.overrides.capacity_scale[0].factor = 0.0;
        assert!(materialize(&spec, &base, &MaterializeContext::default()).is_err());
        let mut spec = ScenarioSpec::named("mix");
        spec.overrides.product_mix = Some(vec![vec![1.0]]);
        assert!(materialize(&spec, &base, &MaterializeContext::default()).is_err());
    }

    #[test]
    fn capacity_scale_touches_only_the_named_facility() {
        let mut base = bundled::example_network();
        base.processing.primary.capacity = Some(vec![vec![1000.0; 3]; 2]);
        let mut spec = ScenarioSpec::named("cap");
        spec.overrides.capacity_scale =
            vec![CapacityScale { tier: FacilityTier::Primary, facility: Some("pri-2".into()), factor: 0.5 }];
        let inst = materialize(&spec, &base, &MaterializeContext::default()).unwrap();
        assert_eq!(inst.processing.primary.capacity.unwrap()[1], vec![1000.0, 500.0, 1000.0]);
    }

    #[test]
    fn trip_scale_multiplies_the_lumped_factor() {
        let base = bundled::example_network();
        let inst = materialize(&ScenarioSpec::named("x"), &base, &MaterializeContext { base_throughput: None, trip_scale: 0.5 })
            .unwrap();
        assert_eq!(inst.trip_multiplier(0, 0).unwrap(), 125.0);
    }

    #[test]
    fn bcs_throughput_cascade() {
        let s = BranchAndBound::default();
        let thr = base_throughput(&bundled::example_network(), &s).unwrap();
        let oracle = (1050.0 + 600.0) * 2.0 * (1.0 - 0.1561);
        assert!((thr - oracle).abs() < 1e-6, "{thr} vs {oracle}");
    }

    #[test]
    fn zero_supply_has_zero_throughput() {
        let mut inst = bundled::example_network();
        inst.supply.mass = vec![vec![0.0; 2]; 2];
        let run = run_system(&inst, ObjectiveKind::Cost, &BranchAndBound::default()).unwrap();
        for tier in FacilityTier::ALL {
            assert!(run.throughput.totals(tier).iter().all(|&v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn most_utilized_ties_go_low() {
        let t = Throughput { tiers: [vec![], vec![vec![1.0], vec![2.0], vec![2.0]], vec![]] };
        assert_eq!(t.most_utilized(FacilityTier::Primary), Some((1, 2.0)));
    }

    #[test]
    fn suite_file_parses() {
        let suite = bundled::example_suite();
        let names: Vec<&str> = suite.scenarios.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["BCS", "TCS-80%", "TCS-40%", "PMS-1", "PMS-2"]);
        assert_eq!(suite.calibration.as_ref().unwrap().target_total_cost, 57_978.0);
    }
}
