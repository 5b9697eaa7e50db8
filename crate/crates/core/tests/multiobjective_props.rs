//! ε-constraint sweeps against brute-force fronts.

mod common;

use proptest::prelude::*;
use rlnd_core::bundled;
use rlnd_core::milp::{BranchAndBound, LinExpr, MilpModel, Relation};
use rlnd_core::multiobjective::{dominates, epsilon_sweep, BiObjective, DEFAULT_THETA};

fn choice(options: &[(f64, f64)]) -> BiObjective {
    let mut m = MilpModel::new("choice");
    let z: Vec<_> = (0..options.len()).map(|k| m.add_binary(format!("z{k}"))).collect();
    let (mut one, mut cost, mut em) = (LinExpr::new(), LinExpr::new(), LinExpr::new());
    for (k, &(c, e)) in options.iter().enumerate() {
        one.add_term(z[k], 1.0);
        cost.add_term(z[k], c);
        em.add_term(z[k], e);
    }
    m.add_row("pick", one, Relation::Eq, 1.0);
    BiObjective::new(m, cost, em)
}

fn nondominated(options: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = options.iter().copied().filter(|a| !options.iter().any(|b| dominates(*b, *a))).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sweep_returns_only_true_front_points(
        options in prop::collection::vec((0u8..20, 0u8..20), 1..8),
        grid in 1usize..12,
    ) {
        let options: Vec<(f64, f64)> = options.into_iter().map(|(c, e)| (f64::from(c), f64::from(e))).collect();
        let front = epsilon_sweep(&choice(&options), grid, DEFAULT_THETA, &BranchAndBound::default()).unwrap();
        let truth = nondominated(&options);
        let got: Vec<(f64, f64)> = front.points.iter().map(|p| (p.total_cost, p.total_emission)).collect();
        for p in &got {
            prop_assert!(truth.contains(p), "{:?} not on {:?}", p, truth);
        }
        // Both extremes of the true front are always found.
        prop_assert!(got.contains(&truth[0]));
        prop_assert!(got.contains(truth.last().unwrap()));
        for p in &front.points {
            // Each point is the ε-constrained cost minimum.
            let best = options.iter().filter(|o| o.1 <= p.epsilon + 1e-9).map(|o| o.0).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(p.total_cost, best);
            prop_assert!(p.total_emission <= p.epsilon + 1e-9);
        }
        let mut dedup = got.clone();
        dedup.sort_by(|a, b| a.0.total_cmp(&b.0));
        dedup.dedup();
        prop_assert_eq!(dedup.len(), got.len());
    }

    #[test]
    fn fine_grid_recovers_integer_fronts(options in prop::collection::vec((0u8..10, 0u8..10), 1..8)) {
        let options: Vec<(f64, f64)> = options.into_iter().map(|(c, e)| (f64::from(c), f64::from(e))).collect();
        let truth = nondominated(&options);
        let span = truth[0].1 - truth.last().unwrap().1;
        // Unit emission steps hit every integer front point.
        let grid = (span as usize).max(1);
        let front = epsilon_sweep(&choice(&options), grid, DEFAULT_THETA, &BranchAndBound::default()).unwrap();
        let mut got: Vec<(f64, f64)> = front.points.iter().map(|p| (p.total_cost, p.total_emission)).collect();
        got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        prop_assert_eq!(got, truth);
    }
}

#[test]
fn bundled_front_points_are_constrained_optima() {
    // Cost and emission both pick primary 3 on the bundled data; a dirty
    // primary 3 creates a trade-off.
    let mut inst = bundled::example_network();
    inst.processing.primary.emission[0][2] = 10.0;
    inst.processing.primary.emission[1][2] = 10.0;
    let fam = BiObjective::system(&inst).unwrap();
    let front = epsilon_sweep(&fam, 4, DEFAULT_THETA, &BranchAndBound::default()).unwrap();
    assert!(front.points.len() >= 2);
    let range = front.payoff.em_max - front.payoff.em_min;
    for p in &front.points {
        let mut m = fam.model.clone();
        let mut e = fam.emission.clone();
        let c = e.constant;
        e.constant = 0.0;
        m.add_row("cap", e, Relation::Le, p.epsilon - c + 1e-9 * p.epsilon.abs());
        m.set_objective(fam.cost.clone());
        let best = common::enumerate(&m).unwrap();
        // The slack reward can trade at most θ·range of cost.
        assert!(p.total_cost >= best - 1e-6 * best.abs(), "{} below {}", p.total_cost, best);
        assert!(p.total_cost <= best + DEFAULT_THETA * range + 1e-6 * best.abs(), "{} vs {}", p.total_cost, best);
    }
    for a in &front.points {
        for b in &front.points {
            assert!(!dominates((a.total_cost, a.total_emission), (b.total_cost, b.total_emission)));
        }
    }
}
