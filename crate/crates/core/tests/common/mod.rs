#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rlnd_core::milp::{solve_lp, MilpModel, Solution, SolveStatus};
use rlnd_core::NetworkInstance;
use serde_json::{json, Value};

fn table(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Value {
    json!((0..rows).map(|_| (0..cols).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>()).collect::<Vec<_>>())
}

fn arcs(rng: &mut ChaCha8Rng, from: usize, to: usize, forbid: bool) -> Value {
    let distance: Vec<Vec<Value>> = (0..from)
        .map(|_| {
            (0..to)
                .map(|_| if forbid && rng.gen_bool(0.15) { json!("forbidden") } else { json!(rng.gen_range(5.0..200.0)) })
                .collect()
        })
        .collect();
    json!({
        "distance": distance,
        "unit_cost": table(rng, from, to, 0.01, 0.4),
        "unit_emission": table(rng, from, to, 0.01, 0.3),
    })
}

fn tier(rng: &mut ChaCha8Rng, items: usize, facilities: usize, supply_scale: f64) -> Value {
    let mut t = json!({
        "cost": table(rng, items, facilities, 0.0, 0.8),
        "credit": table(rng, items, facilities, 0.0, 3.0),
        "emission": table(rng, items, facilities, 0.0, 0.1),
        "offset": table(rng, items, facilities, 0.0, 5.0),
        "resale": (0..items).map(|_| rng.gen_range(0.0..0.3)).collect::<Vec<f64>>(),
        "fixed_cost": (0..facilities).map(|_| rng.gen_range(0.0..300.0)).collect::<Vec<f64>>(),
        "min_open": rng.gen_range(0..=1usize),
    });
    if rng.gen_bool(0.4) {
        t["capacity"] = table(rng, items, facilities, 0.3 * supply_scale, 1.5 * supply_scale);
    }
    if rng.gen_bool(0.3) {
        t["total_capacity"] = json!((0..facilities).map(|_| rng.gen_range(0.5..2.0) * supply_scale).collect::<Vec<f64>>());
    }
    if rng.gen_bool(0.3) {
        t["min_shipment"] = table(rng, items, facilities, 0.0, 0.05 * supply_scale);
    }
    t
}

/// A random network with at most three facilities per tier.
pub fn random_instance(rng: &mut ChaCha8Rng) -> NetworkInstance {
    let (nc, np, ns) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=2));
    random_instance_sized(rng, (nc, np, ns))
}

/// A random network with the given drop-off, primary and secondary counts.
pub fn random_instance_sized(rng: &mut ChaCha8Rng, (nc, np, ns): (usize, usize, usize)) -> NetworkInstance {
    let (ni, nj, nh) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=2));
    let names = |p: &str, n: usize| (1..=n).map(|k| format!("{p}-{k}")).collect::<Vec<_>>();
    let mass = table(rng, ni, nh, 50.0, 1500.0);
    let per_area: f64 = mass.as_array().unwrap().iter().map(|r| r[0].as_f64().unwrap()).sum();
    let composition: Vec<Vec<f64>> = (0..nj)
        .map(|_| (0..ni).map(|_| rng.gen_range(0.0..1.0 / nj as f64)).collect())
        .collect();
    let v = json!({
        "name": "random",
        "sets": {
            "products": names("product", ni),
            "materials": names("material", nj),
            "residence_areas": names("area", nh),
            "dropoffs": names("drop", nc),
            "primaries": names("pri", np),
            "secondaries": names("sec", ns),
        },
        "supply": {
            "mass": mass,
            "trips_per_year": rng.gen_range(1.0..100.0),
            "dedicated_fraction": (0..nc).map(|_| rng.gen_range(0.1..1.0)).collect::<Vec<f64>>(),
            "lumped_multiplier": (0..nh).map(|_| rng.gen_range(0.1..2.0)).collect::<Vec<f64>>(),
        },
        "processing": {
            "dropoff": tier(rng, ni, nc, per_area),
            "primary": tier(rng, ni, np, per_area),
            "secondary": tier(rng, nj, ns, 0.3 * per_area),
            "composition": composition,
            "efficiency": table(rng, nj, np, 0.5, 1.0),
        },
        "arcs": {
            "res_drop": arcs(rng, nh, nc, true),
            "drop_pri": arcs(rng, nc, np, true),
            "pri_sec": arcs(rng, np, ns, false),
        },
        "scenario": { "name": "random" },
    });
    NetworkInstance::from_json(&v.to_string()).expect("generated instance parses")
}

/// Best objective over every binary pattern, each completed by an LP.
/// `None` when no pattern is feasible.
pub fn enumerate(model: &MilpModel) -> Option<f64> {
    let bins: Vec<_> = model.binaries().collect();
    assert!(bins.len() <= 16, "too many binaries to enumerate");
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut m = model.clone();
        for (k, &b) in bins.iter().enumerate() {
            m.fix(b, f64::from((mask >> k) & 1));
        }
        let s = solve_lp(&m.relaxed());
        if s.status == SolveStatus::Optimal {
            best = Some(best.map_or(s.objective, |b| b.min(s.objective)));
        }
    }
    best
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn agrees_with_enumeration(model: &MilpModel, sol: &Solution) -> Result<(), String> {
    match (enumerate(model), sol.status) {
        (None, SolveStatus::Infeasible) => Ok(()),
        (Some(e), SolveStatus::Optimal) if rel_diff(e, sol.objective) <= 1e-6 => Ok(()),
        (e, st) => Err(format!("enumeration {e:?} vs solver {st:?} {}", sol.objective)),
    }
}
