//! Seeded random instances and small hand-built fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{CostJson, CostSpec, Expr, FunctionJson, HolderData};
use crate::dp_solvers::{CostTable, Kernel, MdpSpec, NoiseAtom, StagewiseProblem};
use crate::policy::{ClassKind, Decision, PolicyClass};
use crate::scenario_tree::{ScenarioTree, TreeBuilder};
use crate::verification::InterchangeInstance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A tree, a JSON-backed cost and a class over it.
#[derive(Clone, Debug)]
pub struct Instance {
    pub tree: ScenarioTree,
    pub cost_json: CostJson,
    pub cost: CostSpec,
    pub class: PolicyClass,
}

#[derive(Clone, Copy, Debug)]
pub struct InstanceParams {
    pub max_horizon: usize,
    pub max_branching: usize,
    pub max_grid: usize,
    pub max_policies: u128,
    pub kind: ClassKind,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self { max_horizon: 3, max_branching: 3, max_grid: 3, max_policies: 100_000, kind: ClassKind::Nodewise }
    }
}

fn half_steps(rng: &mut impl Rng, lo: i32, hi: i32) -> f64 {
    rng.gen_range(2 * lo..=2 * hi) as f64 / 2.0
}

fn probabilities(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Tree of the given horizon; every inner node gets 1 to `max_branching`
/// children.
pub fn random_tree(rng: &mut impl Rng, horizon: usize, max_branching: usize) -> ScenarioTree {
    let mut b = TreeBuilder::new(vec![half_steps(rng, -2, 2)]);
    let mut frontier = vec![0];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for parent in frontier {
            let k = rng.gen_range(1..=max_branching);
            for p in probabilities(rng, k) {
                next.push(b.child(parent, p, vec![half_steps(rng, -2, 2)]));
            }
        }
        frontier = next;
    }
    b.build().expect("generated trees are well formed")
}

/// Sorted grid of `n` distinct half-integers in `[-2, 2]`.
pub fn random_grid(rng: &mut impl Rng, n: usize) -> Vec<Decision> {
    let mut pool: Vec<i32> = (-4..=4).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n.min(pool.len()) {
        let i = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out.sort_unstable();
    out.into_iter().map(|v| vec![v as f64 / 2.0]).collect()
}

fn coef(rng: &mut impl Rng, lo: i32, hi: i32) -> Expr {
    Expr::Const(half_steps(rng, lo, hi))
}

/// Polynomial objective coupling consecutive decisions and observations:
/// `Σ_t a_t (u_t - b_t x_t)^2 + c_t u_t u_{t-1} + d_t |u_t| x_t`.
pub fn random_objective(rng: &mut impl Rng, horizon: usize) -> Expr {
    let mut terms = Vec::new();
    for t in 0..=horizon {
        let track = Expr::sub(Expr::u(t), Expr::Mul(vec![coef(rng, -1, 1), Expr::x(t)]));
        terms.push(Expr::Mul(vec![coef(rng, 0, 2), Expr::pow(track, 2.0)]));
        if t > 0 {
            terms.push(Expr::Mul(vec![coef(rng, -1, 1), Expr::u(t), Expr::u(t - 1)]));
        }
        terms.push(Expr::Mul(vec![coef(rng, -1, 1), Expr::abs(Expr::u(t)), Expr::x(t)]));
    }
    Expr::Add(terms)
}

fn class_for(tree: &ScenarioTree, kind: ClassKind, grid: Vec<Decision>) -> PolicyClass {
    PolicyClass::uniform(tree, kind, grid).expect("uniform grids are valid")
}

/// Random instance whose class has at most `max_policies` members.
pub fn random_instance(rng: &mut impl Rng, params: InstanceParams) -> Instance {
    loop {
        let horizon = rng.gen_range(1..=params.max_horizon);
        let tree = random_tree(rng, horizon, params.max_branching);
        let size = rng.gen_range(2..=params.max_grid.max(2));
        let grid = random_grid(rng, size);
        let class = class_for(&tree, params.kind, grid);
        if class.count() > params.max_policies {
            continue;
        }
        let cost_json = CostJson::general(FunctionJson::Expr(random_objective(rng, horizon)));
        let cost = CostSpec::from_json(cost_json.clone()).expect("generated costs are valid");
        return Instance { tree, cost_json, cost, class };
    }
}

/// Random instance with a declared Hölder bound on the objective
/// `Σ_t w_t |u_t - x_t|^α + s_t u_t`; the bound is `C = Σ_t (w_t + |s_t|)`.
pub fn random_holder_instance(rng: &mut impl Rng, params: InstanceParams) -> (Instance, HolderData) {
    let alpha = [1.0, 0.5, 0.75][rng.gen_range(0..3)];
    let mut inst = random_instance(rng, params);
    let horizon = inst.tree.horizon();
    let mut terms = Vec::new();
    let mut c = 0.0;
    for t in 0..=horizon {
        let w = half_steps(rng, 0, 2);
        let s = half_steps(rng, -1, 1);
        terms.push(Expr::Mul(vec![Expr::Const(w), Expr::pow(Expr::abs(Expr::sub(Expr::u(t), Expr::x(t))), alpha)]));
        if alpha == 1.0 {
            terms.push(Expr::Mul(vec![Expr::Const(s), Expr::u(t)]));
            c += s.abs();
        }
        c += w;
    }
    let data = HolderData { c, alpha, delta: 1.0 };
    let mut json = CostJson::general(FunctionJson::Expr(Expr::Add(terms)));
    json.holder = Some(data);
    inst.cost = CostSpec::from_json(json.clone()).expect("generated costs are valid");
    inst.cost_json = json;
    (inst, data)
}

/// Random finite MDP with costs in `[-1, 1]` and `K` set to the largest
/// absolute cost.
pub fn random_mdp(rng: &mut impl Rng, states: usize, actions: usize, gamma: f64, per_action: bool) -> MdpSpec {
    let row = |rng: &mut ChaCha8Rng| probabilities(rng, states);
    let mut inner = ChaCha8Rng::seed_from_u64(rng.gen());
    let kernel = if per_action {
        Kernel::PerAction((0..actions).map(|_| (0..states).map(|_| row(&mut inner)).collect()).collect())
    } else {
        Kernel::Shared((0..states).map(|_| row(&mut inner)).collect())
    };
    let cost: Vec<Vec<Vec<f64>>> = (0..states)
        .map(|_| (0..actions).map(|_| (0..states).map(|_| inner.gen_range(-1.0..=1.0)).collect()).collect())
        .collect();
    let mut mdp = MdpSpec {
        states: (0..states).map(|s| vec![s as f64]).collect(),
        actions: (0..actions).map(|a| vec![a as f64]).collect(),
        allowed_actions: None,
        kernel,
        cost: CostTable::Stationary(cost),
        gamma,
        bound_k: None,
        terminal: None,
    };
    mdp.bound_k = Some(mdp.cost_sup());
    mdp
}

/// Random stagewise-independent problem with `γ ∈ [0, 1)`.
pub fn random_stagewise(rng: &mut impl Rng, max_horizon: usize, max_atoms: usize) -> StagewiseProblem {
    let horizon = rng.gen_range(1..=max_horizon);
    let stages = (0..horizon)
        .map(|_| {
            let k = rng.gen_range(1..=max_atoms);
            probabilities(rng, k)
                .into_iter()
                .map(|prob| NoiseAtom { prob, value: vec![half_steps(rng, -2, 2)] })
                .collect()
        })
        .collect();
    let cost = Expr::Add(vec![
        Expr::pow(Expr::sub(Expr::u_lag(1), Expr::Mul(vec![coef(rng, -1, 1), Expr::x_lag(0)])), 2.0),
        Expr::Mul(vec![coef(rng, -1, 1), Expr::abs(Expr::Mul(vec![Expr::x_lag(1), Expr::u_lag(1)]))]),
        Expr::Mul(vec![coef(rng, -1, 1), Expr::x_lag(0)]),
    ]);
    let size = rng.gen_range(2..=3);
    StagewiseProblem {
        x0: vec![half_steps(rng, -2, 2)],
        gamma: (rng.gen_range(0..10) as f64) / 10.0,
        decisions: random_grid(rng, size),
        stages,
        stage_costs: vec![FunctionJson::Expr(cost)],
    }
}

/// Random single-stage interchange data: 2 to `max_nodes` nodes, each with
/// 1 to `max_choices` half-integer values in `[-5, 5]`.
pub fn random_interchange(rng: &mut impl Rng, max_nodes: usize, max_choices: usize) -> InterchangeInstance {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let probs = probabilities(rng, n);
    let values = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=max_choices.max(1));
            (0..k).map(|_| half_steps(rng, -5, 5)).collect()
        })
        .collect();
    InterchangeInstance { probs, values }
}

/// Two stages of tracking with a switching penalty on a branching tree.
pub fn two_stage_fixture() -> Instance {
    let mut b = TreeBuilder::new(vec![0.0]);
    let a = b.child(0, 0.5, vec![1.0]);
    let c = b.child(0, 0.5, vec![-1.0]);
    b.child(a, 0.5, vec![1.0]);
    b.child(a, 0.5, vec![0.0]);
    b.child(c, 0.25, vec![-1.0]);
    b.child(c, 0.75, vec![0.0]);
    let tree = b.build().expect("fixture");
    let mut terms = Vec::new();
    for t in 0..=2 {
        terms.push(Expr::pow(Expr::sub(Expr::u(t), Expr::x(t)), 2.0));
    }
    terms.push(Expr::Mul(vec![Expr::Const(0.5), Expr::abs(Expr::sub(Expr::u(2), Expr::u(1)))]));
    let cost_json = CostJson::general(FunctionJson::Expr(Expr::Add(terms)));
    let cost = CostSpec::from_json(cost_json.clone()).expect("fixture");
    let class = class_for(&tree, ClassKind::Nodewise, vec![vec![-1.0], vec![0.0], vec![1.0]]);
    Instance { tree, cost_json, cost, class }
}

/// One branching with two equally likely outcomes `±1` that the stage-1
/// decision should track; a history-blind class has to commit to one value.
pub fn branching_fixture(kind: ClassKind) -> Instance {
    let tree = ScenarioTree::product(vec![0.0], &[vec![(0.5, vec![1.0]), (0.5, vec![-1.0])]]).expect("fixture");
    let cost_json = CostJson::general(FunctionJson::Expr(Expr::Add(vec![
        Expr::pow(Expr::sub(Expr::u(1), Expr::x(1)), 2.0),
        Expr::Mul(vec![Expr::Const(0.1), Expr::abs(Expr::u(0))]),
    ])));
    let cost = CostSpec::from_json(cost_json.clone()).expect("fixture");
    let class = class_for(&tree, kind, vec![vec![-1.0], vec![1.0]]);
    Instance { tree, cost_json, cost, class }
}
