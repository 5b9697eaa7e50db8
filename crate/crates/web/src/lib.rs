//! Browser bindings for the demo page in `www/`.
//!
//! Every entry point takes and returns JSON strings. The plain `*_json`
//! functions carry the logic so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use rlnd_core::builders::build_system_model;
use rlnd_core::domain::FacilityTier;
use rlnd_core::milp::{BranchAndBound, MilpSolver, SolveStatus};
use rlnd_core::multiobjective::{epsilon_sweep, BiObjective, UserFamily};
use rlnd_core::robust::{capacity_preset, gamma_ramp};
use rlnd_core::scenarios::{base_throughput, materialize, run_system, run_user, MaterializeContext, ScenarioSpec};
use rlnd_core::{bundled, NetworkInstance, ObjectiveKind};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    pub trips_per_year: f64,
    /// Aggregate primary capacity as a fraction of the uncapacitated peak
    /// primary throughput; `None` leaves primaries uncapacitated.
    pub primary_capacity_fraction: Option<f64>,
    /// Unit processing emission at the third primary (both products).
    pub primary3_emission: Option<f64>,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self { trips_per_year: 500.0, primary_capacity_fraction: None, primary3_emission: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolveRequest {
    #[serde(flatten)]
    pub network: NetworkParams,
    pub model: String,
    pub objective: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub total_cost: f64,
    pub total_emission: f64,
    pub fixed_cost: f64,
    pub resale_revenue: f64,
    pub emission_offset: f64,
    pub transport_cost: f64,
    pub transport_emission: f64,
    pub open: [Vec<String>; 3],
    pub primary_inflow_kg: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ParetoRequest {
    #[serde(flatten)]
    pub network: NetworkParams,
    pub grid: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontPoint {
    pub total_cost: f64,
    pub total_emission: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParetoResponse {
    pub system: Vec<FrontPoint>,
    pub user: Vec<FrontPoint>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RobustRequest {
    #[serde(flatten)]
    pub network: NetworkParams,
    pub deviation: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustResponse {
    pub uncertain_rows: usize,
    pub ramp: Vec<RampRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RampRow {
    pub fraction: f64,
    pub status: SolveStatus,
    pub total_cost: Option<f64>,
}

fn solver() -> BranchAndBound {
    BranchAndBound::default()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn build_instance(p: &NetworkParams, solver: &dyn MilpSolver) -> Result<NetworkInstance, String> {
    let base = bundled::example_network();
    let mut spec = ScenarioSpec::named("demo");
    spec.overrides.trips_per_year = Some(p.trips_per_year);
    spec.overrides.primary_total_capacity_fraction = p.primary_capacity_fraction;
    let ctx = MaterializeContext {
        base_throughput: match p.primary_capacity_fraction {
            Some(_) => Some(base_throughput(&base, solver).map_err(err)?),
            None => None,
        },
        ..MaterializeContext::default()
    };
    let mut inst = materialize(&spec, &base, &ctx).map_err(err)?;
    if let Some(e) = p.primary3_emission {
        for row in &mut inst.processing.primary.emission {
            row[2] = e;
        }
    }
    inst.validate().into_result().map_err(err)?;
    Ok(inst)
}

pub fn solve_json(request: &str) -> Result<String, String> {
    let req: SolveRequest = serde_json::from_str(request).map_err(err)?;
    let objective: ObjectiveKind = req.objective.parse().map_err(err)?;
    let s = solver();
    let inst = build_instance(&req.network, &s)?;
    let run = match req.model.as_str() {
        "system" => run_system(&inst, objective, &s),
        "user" => run_user(&inst, objective, &s),
        other => return Err(format!("unknown model `{other}` (expected system|user)")),
    }
    .map_err(err)?;
    let b = run.breakdown.clone().unwrap_or_default();
    let summary = SolveSummary {
        status: run.status,
        total_cost: b.total_cost,
        total_emission: b.total_emission,
        fixed_cost: b.fixed_cost.sum(),
        resale_revenue: b.resale_revenue.sum(),
        emission_offset: b.emission_offset.sum(),
        transport_cost: b.transport_cost.sum(),
        transport_emission: b.transport_emission.sum(),
        open: run.open.clone(),
        primary_inflow_kg: run.throughput.totals(FacilityTier::Primary),
    };
    serde_json::to_string(&summary).map_err(err)
}

pub fn pareto_json(request: &str) -> Result<String, String> {
    let req: ParetoRequest = serde_json::from_str(request).map_err(err)?;
    if req.grid == 0 || req.grid > 40 {
        return Err("grid must be between 1 and 40".into());
    }
    let s = solver();
    let inst = build_instance(&req.network, &s)?;
    let pts = |f: rlnd_core::multiobjective::ParetoFront| {
        f.points.iter().map(|p| FrontPoint { total_cost: p.total_cost, total_emission: p.total_emission }).collect()
    };
    let system = epsilon_sweep(&BiObjective::system(&inst).map_err(err)?, req.grid, req.theta, &s).map_err(err)?;
    let user = epsilon_sweep(&UserFamily { instance: &inst }, req.grid, req.theta, &s).map_err(err)?;
    serde_json::to_string(&ParetoResponse { system: pts(system), user: pts(user) }).map_err(err)
}

pub fn robust_json(request: &str) -> Result<String, String> {
    let req: RobustRequest = serde_json::from_str(request).map_err(err)?;
    if req.steps == 0 || req.steps > 20 {
        return Err("steps must be between 1 and 20".into());
    }
    let s = solver();
    let inst = build_instance(&req.network, &s)?;
    let art = build_system_model(&inst, ObjectiveKind::Cost).map_err(err)?;
    let spec = capacity_preset(&art, req.deviation, 1.0);
    let ramp = gamma_ramp(&art, &spec, req.steps, &s).map_err(err)?;
    let ramp = ramp
        .iter()
        .map(|p| RampRow {
            fraction: p.fraction,
            status: p.status,
            total_cost: (p.status == SolveStatus::Optimal).then_some(p.objective),
        })
        .collect();
    serde_json::to_string(&RobustResponse { uncertain_rows: spec.rows.len(), ramp }).map_err(err)
}

#[wasm_bindgen]
pub fn solve(request: &str) -> Result<String, JsValue> {
    solve_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pareto(request: &str) -> Result<String, JsValue> {
    pareto_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn robust(request: &str) -> Result<String, JsValue> {
    robust_json(request).map_err(|e| JsValue::from_str(&e))
}
