//! Hand-derived values on small fixtures, plus an independent enumerator
//! for the post-decision value function.

use approx::assert_abs_diff_eq;

use msopt_core::dp_solvers::{mdp_backward_induction, value_iteration, CostTable, Kernel, MdpSpec};
use msopt_core::generate::{branching_fixture, random_instance, rng, two_stage_fixture, InstanceParams};
use msopt_core::policy::{ClassKind, Decision, Policy, PolicyClass};
use msopt_core::scenario_tree::{NodeId, ScenarioTree};
use msopt_core::cost::CostSpec;
use msopt_core::value_process::{
    brute_force_optimum, expected_objective, post_decision_value, pre_decision_value, ValueTables,
};
use msopt_core::verification::{interchange_gap, verify_policy, InterchangeInstance, Verdict};

#[test]
fn two_stage_fixture_values() {
    let inst = two_stage_fixture();
    assert_eq!(inst.class.count(), 2187);
    let bf = brute_force_optimum(&inst.tree, &inst.cost, &inst.class).unwrap();
    // 0.5 * 0.25 + 0.5 * 0.375
    assert_abs_diff_eq!(bf.value, 0.3125, epsilon = 1e-12);
    let tables = ValueTables::backward(&inst.tree, &inst.cost, &inst.class, 1 << 20).unwrap();
    assert_abs_diff_eq!(tables.root_value(), 0.3125, epsilon = 1e-12);
    let expected = [0.0, 1.0, -1.0, 1.0, 0.0, -1.0, 0.0];
    for (n, d) in bf.policy.decisions().iter().enumerate() {
        assert_eq!(d[0], expected[n], "node {n}");
    }
}

#[test]
fn perturbed_policy_shows_positive_slack() {
    let inst = two_stage_fixture();
    let bf = brute_force_optimum(&inst.tree, &inst.cost, &inst.class).unwrap();
    let bad = bf.policy.with_decision(1, vec![0.0]);
    assert_abs_diff_eq!(expected_objective(&inst.tree, &inst.cost, &bad).unwrap(), 0.8125, epsilon = 1e-12);
    let r = verify_policy(&inst.tree, &inst.cost, &inst.class, &bad, 1e-9).unwrap();
    assert_eq!(r.verdict, Some(Verdict::NotOptimal));
    let w = r.witness.unwrap();
    assert_eq!((w.node, w.stage), (1, 1));
    assert_abs_diff_eq!(w.slack, 1.0, epsilon = 1e-12);
    let post = r.post_decision.unwrap();
    assert_abs_diff_eq!(post.per_stage_slack[0].max_slack, 0.5, epsilon = 1e-12);
}

#[test]
fn branching_fixture_values() {
    let nw = branching_fixture(ClassKind::Nodewise);
    let hb = branching_fixture(ClassKind::HistoryBlind);
    assert_abs_diff_eq!(brute_force_optimum(&nw.tree, &nw.cost, &nw.class).unwrap().value, 0.1, epsilon = 1e-12);
    assert_abs_diff_eq!(brute_force_optimum(&hb.tree, &hb.cost, &hb.class).unwrap().value, 2.1, epsilon = 1e-12);
    // v_0 - E V_1 = 2 for either root decision
    let tables = ValueTables::definitional(&hb.tree, &hb.cost, &hb.class, 1 << 20).unwrap();
    let gaps = tables.expectation_gaps(&hb.tree);
    assert_abs_diff_eq!(gaps[0].min, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(gaps[0].max, 2.0, epsilon = 1e-12);
}

#[test]
fn builtin_interchange_values() {
    let inst = InterchangeInstance::builtin();
    let nw = interchange_gap(&inst.probs, &inst.nodewise_family(16).unwrap(), 1e-12).unwrap();
    assert_eq!((nw.lhs, nw.rhs, nw.gap, nw.members), (1.0, 1.0, 0.0, 4));
    let hb = interchange_gap(&inst.probs, &inst.history_blind_family().unwrap(), 1e-12).unwrap();
    assert_eq!((hb.lhs, hb.rhs, hb.gap, hb.members), (1.0, 5.0, 4.0, 2));
    assert!(hb.witness.is_some());
}

fn constant_mdp(gamma: f64) -> MdpSpec {
    MdpSpec {
        states: vec![vec![0.0], vec![1.0]],
        actions: vec![vec![0.0]],
        allowed_actions: None,
        kernel: Kernel::Shared(vec![vec![0.5, 0.5], vec![1.0, 0.0]]),
        cost: CostTable::Stationary(vec![vec![vec![1.0; 2]]; 2]),
        gamma,
        bound_k: Some(1.0),
        terminal: None,
    }
}

#[test]
fn geometric_series() {
    let fh = mdp_backward_induction(&constant_mdp(0.5), 3).unwrap();
    assert_eq!(fh.values[0], vec![1.75, 1.75]);
    let vi = value_iteration(&constant_mdp(0.5), 1e-8, 1000).unwrap();
    for v in vi.values {
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-8);
    }
    let vi = value_iteration(&constant_mdp(-0.5), 1e-8, 1000).unwrap();
    for v in vi.values {
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-8);
    }
}

#[test]
fn single_stage_is_grid_minimum() {
    let tree = ScenarioTree::chain(vec![vec![0.3]]).unwrap();
    let cost = CostSpec::general(|xs: &[&[f64]], us: &[&[f64]]| (us[0][0] - xs[0][0]).powi(2));
    let cls = PolicyClass::uniform(&tree, ClassKind::Nodewise, vec![vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
    let bf = brute_force_optimum(&tree, &cost, &cls).unwrap();
    assert_abs_diff_eq!(bf.value, 0.09, epsilon = 1e-15);
    assert_eq!(bf.policy.decision(0), &[0.0]);
    let r = verify_policy(&tree, &cost, &cls, &bf.policy, 1e-9).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Optimal));
    let r = verify_policy(&tree, &cost, &cls, &Policy::constant(&tree, vec![1.0]), 1e-9).unwrap();
    assert_eq!(r.verdict, Some(Verdict::NotOptimal));
}

/// Minimum over every assignment of the class's blocks that meet the strict
/// subtree of `node`, written without the library's enumeration.
fn naive_post_value(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass, node: NodeId, head: &[Decision]) -> f64 {
    let below = tree.descendants(node);
    let mut blocks: Vec<usize> = below.iter().map(|&n| cls.block_of(n)).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let sizes: Vec<usize> = blocks.iter().map(|&b| cls.blocks()[b].candidates.len()).collect();
    let total: usize = sizes.iter().product();
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut rest = code;
        let mut choice = vec![0usize; blocks.len()];
        for (c, &s) in choice.iter_mut().zip(&sizes) {
            *c = rest % s;
            rest /= s;
        }
        let decide = |n: NodeId| -> &[f64] {
            let b = cls.block_of(n);
            let k = blocks.iter().position(|&x| x == b).unwrap();
            &cls.blocks()[b].candidates[choice[k]]
        };
        let mut value = 0.0;
        for (leaf, p) in tree.descendant_leaves(node) {
            let ids = tree.path_ids(leaf).unwrap();
            let xs: Vec<&[f64]> = ids.iter().map(|&i| tree.node(i).unwrap().obs.as_slice()).collect();
            let us: Vec<&[f64]> = ids
                .iter()
                .enumerate()
                .map(|(s, &i)| if s < head.len() { head[s].as_slice() } else { decide(i) })
                .collect();
            value += p * cost.eval(&xs, &us);
        }
        best = best.min(value);
    }
    best
}

#[test]
fn post_decision_value_matches_naive_enumeration() {
    for kind in [ClassKind::Nodewise, ClassKind::HistoryBlind] {
        let params = InstanceParams { max_horizon: 2, max_branching: 2, max_grid: 2, kind, ..Default::default() };
        let mut r = rng(11);
        for _ in 0..10 {
            let inst = random_instance(&mut r, params);
            let tree = &inst.tree;
            for n in 0..tree.len() {
                let ids = tree.path_ids(n).unwrap();
                // alternate grid points along the path
                let head: Vec<Decision> =
                    ids.iter().enumerate().map(|(s, &i)| inst.class.grid(i)[s % inst.class.grid(i).len()].clone()).collect();
                let want = naive_post_value(tree, &inst.cost, &inst.class, n, &head);
                let got = post_decision_value(tree, &inst.cost, &inst.class, n, &head).unwrap();
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
                let pre = pre_decision_value(tree, &inst.cost, &inst.class, n, &head[..head.len() - 1]).unwrap();
                let naive_pre = inst
                    .class
                    .grid(n)
                    .iter()
                    .map(|u| {
                        let mut h = head[..head.len() - 1].to_vec();
                        h.push(u.clone());
                        naive_post_value(tree, &inst.cost, &inst.class, n, &h)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_abs_diff_eq!(pre, naive_pre, epsilon = 1e-12);
            }
        }
    }
}
