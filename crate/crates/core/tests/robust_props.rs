//! Robust counterpart against nominal, worst-case and LP oracles.

use proptest::prelude::*;
use rlnd_core::builders::{ConstraintTag, ModelArtifacts, ModelKind, TagFamily};
use rlnd_core::milp::{solve_lp, LinExpr, MilpModel, Relation, SolveStatus};
use rlnd_core::objectives::{StageExpressions, VarMap};
use rlnd_core::robust::{
    protection_value, protection_value_of, robustify, violation_bound, worst_case, UncertainRow, UncertaintySpec,
};
use rlnd_core::ObjectiveKind;

#[derive(Debug, Clone)]
struct Case {
    /// Rows `a x ≤ b` with `b ≥ 0`, so `x = 0` is always feasible.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Maximized profit.
    c: Vec<f64>,
    lower: Vec<f64>,
    dev: Vec<Vec<f64>>,
}

impl Case {
    fn artifacts(&self) -> ModelArtifacts {
        let mut m = MilpModel::new("case");
        let x: Vec<_> = self.c.iter().enumerate().map(|(k, _)| m.add_continuous(format!("x{k}"), self.lower[k], 5.0)).collect();
        let mut tags = Vec::new();
        for (r, row) in self.a.iter().enumerate() {
            let mut e = LinExpr::new();
            for (k, &v) in row.iter().enumerate() {
                e.add_term(x[k], v);
            }
            m.add_row(format!("r{r}"), e, Relation::Le, self.b[r]);
            tags.push(ConstraintTag { family: TagFamily::Capacity, label: format!("r{r}") });
        }
        let mut obj = LinExpr::new();
        for (k, &v) in self.c.iter().enumerate() {
            obj.add_term(x[k], -v);
        }
        m.set_objective(obj);
        ModelArtifacts {
            kind: ModelKind::System,
            objective: ObjectiveKind::Cost,
            model: m,
            vars: VarMap::default(),
            tags,
            warnings: Vec::new(),
            stages: StageExpressions::default(),
        }
    }

    fn spec(&self, gamma: f64) -> UncertaintySpec {
        UncertaintySpec {
            gamma: Some(gamma),
            rows: self
                .dev
                .iter()
                .enumerate()
                .map(|(r, d)| UncertainRow {
                    row: format!("r{r}"),
                    entries: d.iter().enumerate().map(|(k, &v)| (format!("x{k}"), v)).collect(),
                    gamma: None,
                })
                .collect(),
        }
    }
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..=4, 1usize..=3).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..4.0, n), m),
            prop::collection::vec(0.0f64..10.0, m),
            prop::collection::vec(0.1f64..3.0, n),
            prop::collection::vec(prop::sample::select(vec![0.0, 0.0, -2.0]), n),
            prop::collection::vec(prop::collection::vec(0.0f64..1.5, n), m),
        )
            .prop_map(|(a, b, c, lower, dev)| Case { a, b, c, lower, dev })
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sandwich_and_monotone_ramp(c in case()) {
        let art = c.artifacts();
        let n = c.c.len() as f64;
        let nominal = solve_lp(&art.model);
        prop_assert_eq!(nominal.status, SolveStatus::Optimal);
        // The all-at-bound model is linear only for sign-definite variables.
        let worst = if c.lower.iter().all(|&l| l >= 0.0) {
            let w = solve_lp(&worst_case(&art, &c.spec(0.0)).unwrap().model);
            prop_assert_eq!(w.status, SolveStatus::Optimal);
            Some(w.objective)
        } else {
            prop_assert!(worst_case(&art, &c.spec(0.0)).is_err());
            None
        };
        let mut last = nominal.objective;
        for k in 0..=8 {
            let g = n * k as f64 / 8.0;
            let rob = solve_lp(&robustify(&art, &c.spec(g)).unwrap().model);
            prop_assert_eq!(rob.status, SolveStatus::Optimal);
            if k == 0 {
                prop_assert!(close(rob.objective, nominal.objective));
            }
            prop_assert!(rob.objective >= last - 1e-6 * last.abs().max(1.0));
            if let Some(w) = worst {
                if k == 8 {
                    prop_assert!(close(rob.objective, w), "{} vs {}", rob.objective, w);
                }
                prop_assert!(rob.objective <= w + 1e-6 * w.abs().max(1.0));
            }
            last = rob.objective;
        }
    }

    #[test]
    fn robust_point_survives_its_protection(c in case(), g in 0.0f64..4.0) {
        let art = c.artifacts();
        let spec = c.spec(0.0).with_gamma(g);
        let rob = robustify(&art, &spec).unwrap();
        let s = solve_lp(&rob.model);
        prop_assert_eq!(s.status, SolveStatus::Optimal);
        let x: Vec<f64> = (0..c.c.len()).map(|k| s.value(rob.model.var_by_name(&format!("x{k}")).unwrap())).collect();
        for (r, row) in c.a.iter().enumerate() {
            let lhs: f64 = row.iter().zip(&x).map(|(a, v)| a * v).sum();
            let prot = protection_value(&art, &x, &spec, &format!("r{r}")).unwrap();
            prop_assert!(lhs + prot <= c.b[r] + 1e-6 * c.b[r].abs().max(1.0), "row {}: {} + {} > {}", r, lhs, prot, c.b[r]);
        }
    }

    #[test]
    fn protection_value_matches_lp(weights in prop::collection::vec(-5.0f64..5.0, 1..7), g in 0.0f64..8.0) {
        // max Σ |w| η  s.t. Σ η ≤ Γ, 0 ≤ η ≤ 1.
        let mut m = MilpModel::new("protect");
        let eta: Vec<_> = (0..weights.len()).map(|k| m.add_continuous(format!("e{k}"), 0.0, 1.0)).collect();
        let mut budget = LinExpr::new();
        let mut obj = LinExpr::new();
        for (k, w) in weights.iter().enumerate() {
            budget.add_term(eta[k], 1.0);
            obj.add_term(eta[k], -w.abs());
        }
        m.add_row("budget", budget, Relation::Le, g);
        m.set_objective(obj);
        let lp = -solve_lp(&m).objective;
        prop_assert!(close(protection_value_of(&weights, g), lp), "{} vs {}", protection_value_of(&weights, g), lp);
    }

    #[test]
    fn integer_budget_takes_the_largest_weights(weights in prop::collection::vec(0.0f64..5.0, 1..7), g in 0usize..8) {
        let mut sorted = weights.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let top: f64 = sorted.iter().take(g).sum();
        prop_assert!(close(protection_value_of(&weights, g as f64), top));
    }

    #[test]
    fn violation_bound_matches_numeric_cdf(g in 0.0f64..10.0, n in 1usize..50) {
        prop_assert!((violation_bound(g, n) - (1.0 - phi((g - 1.0) / (n as f64).sqrt()))).abs() <= 1e-6);
    }
}

/// Standard normal CDF by composite Simpson integration of the density.
fn phi(z: f64) -> f64 {
    let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, steps) = (-12.0, 20_000);
    let h = (z - a) / steps as f64;
    let mut s = density(a) + density(z);
    for k in 1..steps {
        s += density(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn violation_bound_anchor() {
    for n in [1, 2, 5, 40] {
        assert_eq!(violation_bound(1.0, n), 0.5);
    }
}
