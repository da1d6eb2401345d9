use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use msopt_core::dp_solvers::{
    bellman_operator, lag_recursion_check, mdp_backward_induction, CostTable, LagReport,
};
use msopt_core::generate::{
    random_instance, random_interchange, random_mdp, random_stagewise, random_tree, rng, InstanceParams,
};
use msopt_core::policy::{doob_dynkin_factorize, policy_to_leafwise, ClassKind};
use msopt_core::scenario_tree::ScenarioTree;
use msopt_core::value_process::{
    brute_force_parallel, brute_force_with_cap, essential_infimum, ValueTables,
};
use msopt_core::verification::interchange_gap;

const CAP: u128 = 1 << 24;

fn small(kind: ClassKind) -> InstanceParams {
    InstanceParams { max_horizon: 3, max_branching: 2, max_grid: 3, max_policies: 5_000, kind }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn essential_infimum_ignores_member_order(seed in any::<u64>(), members in 1usize..50, len in 1usize..8) {
        let mut r = rng(seed);
        let mut family: Vec<Vec<f64>> =
            (0..members).map(|_| (0..len).map(|_| r.gen_range(-10.0..10.0)).collect()).collect();
        let a = essential_infimum(&family).unwrap();
        family.shuffle(&mut r);
        prop_assert_eq!(a, essential_infimum(&family).unwrap());
    }

    #[test]
    fn backward_and_definitional_tables_agree(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), small(ClassKind::Nodewise));
        let b = ValueTables::backward(&inst.tree, &inst.cost, &inst.class, CAP).unwrap();
        let d = ValueTables::definitional(&inst.tree, &inst.cost, &inst.class, CAP).unwrap();
        for n in 0..inst.tree.len() {
            for (x, y) in b.post(n).iter().zip(d.post(n)) {
                prop_assert!((x - y).abs() <= 1e-9, "node {n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn pre_decision_is_minimum_of_post_decision(seed in any::<u64>(), blind in any::<bool>()) {
        let kind = if blind { ClassKind::HistoryBlind } else { ClassKind::Nodewise };
        let inst = random_instance(&mut rng(seed), small(kind));
        let t = ValueTables::for_class(&inst.tree, &inst.cost, &inst.class).unwrap();
        for n in 0..inst.tree.len() {
            let r = inst.class.grid(n).len();
            for (i, &pre) in t.pre(n).iter().enumerate() {
                let m = t.post(n)[i * r..(i + 1) * r].iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(pre, m);
            }
        }
    }

    #[test]
    fn post_value_dominates_expected_next_pre_value(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), small(ClassKind::HistoryBlind));
        let t = ValueTables::definitional(&inst.tree, &inst.cost, &inst.class, CAP).unwrap();
        for g in t.expectation_gaps(&inst.tree) {
            prop_assert!(g.min >= -1e-12, "stage {}: {}", g.stage, g.min);
        }
    }

    #[test]
    fn interchange_lhs_never_exceeds_rhs(seed in any::<u64>()) {
        let inst = random_interchange(&mut rng(seed), 5, 4);
        for family in [inst.nodewise_family(1 << 20).unwrap(), inst.history_blind_family().unwrap()] {
            let r = interchange_gap(&inst.probs, &family, 1e-12).unwrap();
            prop_assert!(r.lhs <= r.rhs + 1e-12);
        }
    }

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>(), g in prop::sample::select(vec![-0.9, -0.5, 0.0, 0.5, 0.9])) {
        let mut r = rng(seed);
        let per_action = r.gen();
        let mdp = random_mdp(&mut r, 4, 3, g, per_action);
        let v1: Vec<f64> = (0..4).map(|_| r.gen_range(-5.0..5.0)).collect();
        let v2: Vec<f64> = (0..4).map(|_| r.gen_range(-5.0..5.0)).collect();
        let (t1, _) = bellman_operator(&mdp, 0, &v1);
        let (t2, _) = bellman_operator(&mdp, 0, &v2);
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(sup(&t1, &t2) <= g.abs() * sup(&v1, &v2) + 1e-12);
    }

    #[test]
    fn nonnegative_costs_grow_with_horizon(seed in any::<u64>(), horizon in 0usize..6) {
        let mut r = rng(seed);
        let g = r.gen_range(0.0..1.0);
        let mut mdp = random_mdp(&mut r, 3, 2, g, true);
        if let CostTable::Stationary(c) = &mut mdp.cost {
            c.iter_mut().flatten().flatten().for_each(|x| *x = x.abs());
        }
        let short = mdp_backward_induction(&mdp, horizon).unwrap();
        let long = mdp_backward_induction(&mdp, horizon + 1).unwrap();
        for (a, b) in short.values[0].iter().zip(&long.values[0]) {
            prop_assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn parallel_enumeration_matches_sequential(seed in any::<u64>(), blind in any::<bool>()) {
        let kind = if blind { ClassKind::HistoryBlind } else { ClassKind::Nodewise };
        let inst = random_instance(&mut rng(seed), small(kind));
        let a = brute_force_with_cap(&inst.tree, &inst.cost, &inst.class, CAP).unwrap();
        let b = brute_force_parallel(&inst.tree, &inst.cost, &inst.class, CAP).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.index, b.index);
        prop_assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn leafwise_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, small(ClassKind::Nodewise));
        let policy = inst.class.policy_at(r.gen_range(0..inst.class.count()));
        let leafwise = policy_to_leafwise(&inst.tree, &policy).unwrap();
        prop_assert_eq!(doob_dynkin_factorize(&inst.tree, &leafwise).unwrap(), policy);
    }

    #[test]
    fn tree_json_round_trip(seed in any::<u64>(), horizon in 0usize..4) {
        let tree = random_tree(&mut rng(seed), horizon, 3);
        prop_assert!(tree.is_valid());
        let back: ScenarioTree = serde_json::from_str(&serde_json::to_string(&tree).unwrap()).unwrap();
        prop_assert_eq!(back, tree);
    }

    #[test]
    fn lag_recursion_holds_on_stagewise_trees(seed in any::<u64>()) {
        let p = random_stagewise(&mut rng(seed), 3, 2);
        let (tree, cost, cls) = p.to_tree().unwrap();
        match lag_recursion_check(&tree, &cost, &cls, 1e-9).unwrap() {
            LagReport::Applicable { recursion_holds, window_collapse_holds, .. } => {
                prop_assert!(recursion_holds);
                prop_assert!(window_collapse_holds);
            }
            LagReport::Inapplicable { .. } => prop_assert!(p.gamma == 0.0),
        }
    }
}
