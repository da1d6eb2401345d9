//! Dynamic equations for structured problems: additive lag-ℓ costs, finite
//! MDPs, discounted value iteration and the stagewise-independent recursion.
//!
//! For an additive cost the shifted value function is
//!
//! ```text
//! Ṽ_t(x_{:t}, u_{:t-1}) = γ^{-t} (V_t(x_{:t}, u_{:t-1}) - Σ_{i=1}^{t} γ^{i-1} c_i)
//! ```
//!
//! and, on a lag-ℓ tree with a nodewise class,
//! `γ^t Ṽ_t = min_{u_t} γ^t E[c_{t+1} + γ Ṽ_{t+1} | x_{:t}]`. When `γ^t < 0` the
//! minimum over `γ^t (·)` turns into a maximum of `(·)`; the checks here
//! account for the sign.

mod mdp;
mod sddp;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mdp::{
    bellman_operator, mdp_backward_induction, value_iteration, CostTable, FiniteHorizon, Kernel, MdpError, MdpSpec,
    ValueIteration,
};
pub use sddp::{sddp_recursion, NoiseAtom, StagewiseProblem, StagewiseSolution};

use crate::cost::{AdditiveCost, CostError, CostSpec};
use crate::policy::{same_decision, Policy, PolicyClass, PolicyError};
use crate::scenario_tree::{NodeId, ScenarioTree, TreeError};
use crate::value_process::{ValueError, ValueTables};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("cost is not additive")]
    NotAdditive,
    #[error("the lag recursion needs a decomposable class")]
    NotDecomposable,
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("stagewise problem: {0}")]
    Stagewise(String),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

fn additive(cost: &CostSpec) -> Result<&AdditiveCost, DpError> {
    cost.as_additive().ok_or(DpError::NotAdditive)
}

/// Ṽ_t at every node for every pre-decision grid history; `None` where the
/// shift is undefined (`γ = 0`, `t ≥ 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct TildeTables {
    gamma: f64,
    values: Vec<Option<Vec<f64>>>,
}

impl TildeTables {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.values[node].as_deref()
    }

    /// Whether the shift is defined at stage `t`.
    pub fn applicable(&self, t: usize) -> bool {
        t == 0 || self.gamma != 0.0
    }

    /// Ṽ_t along the policy's own history at every node.
    pub fn along(&self, tree: &ScenarioTree, cls: &PolicyClass, policy: &Policy) -> Result<Vec<Option<f64>>, DpError> {
        let base = pre_indices(tree, cls, policy)?;
        Ok((0..tree.len()).map(|n| self.values[n].as_ref().map(|v| v[base[n]])).collect())
    }
}

/// Pre-history index of every node along a policy.
fn pre_indices(tree: &ScenarioTree, cls: &PolicyClass, policy: &Policy) -> Result<Vec<usize>, DpError> {
    let digits = cls.indices(policy)?;
    let mut base = vec![0usize; tree.len()];
    for t in 1..=tree.horizon() {
        for &n in tree.stage_nodes(t) {
            let p = tree.nodes()[n].parent.expect("non-root");
            base[n] = base[p] * cls.grid(p).len() + digits[p];
        }
    }
    Ok(base)
}

/// Decisions of the pre-history `j` at `node`.
fn pre_history(tree: &ScenarioTree, cls: &PolicyClass, tables: &ValueTables, node: NodeId, j: usize) -> Vec<Vec<f64>> {
    match tree.nodes()[node].parent {
        Some(p) => tables.history(cls, p, j),
        None => Vec::new(),
    }
}

fn as_slices(h: &[Vec<f64>]) -> Vec<&[f64]> {
    h.iter().map(Vec::as_slice).collect()
}

/// Shifts the pre-decision tables of an additive problem.
pub fn tilde_shift(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    tables: &ValueTables,
) -> Result<TildeTables, DpError> {
    let add = additive(cost)?;
    let gamma = add.gamma();
    let mut values = Vec::with_capacity(tree.len());
    for n in 0..tree.len() {
        let t = tree.stage(n);
        let scale = gamma.powi(t as i32);
        if scale == 0.0 {
            values.push(None);
            continue;
        }
        let xs = tree.path(n)?;
        let row = tables
            .pre(n)
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let h = pre_history(tree, cls, tables, n, j);
                (v - add.partial_sum(t, &xs, &as_slices(&h))) / scale
            })
            .collect();
        values.push(Some(row));
    }
    Ok(TildeTables { gamma, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagStage {
    pub t: usize,
    /// Range of `sign(γ^t) (Ṽ_t - opt_{u_t} E[c_{t+1} + γ Ṽ_{t+1}])`; `None`
    /// at the last stage.
    pub recursion_min_gap: Option<f64>,
    pub recursion_max_gap: Option<f64>,
    /// Largest disagreement of Ṽ_t between histories sharing a lag window.
    pub collapse_max_diff: f64,
    /// Two (node, pre-history index) entries attaining `collapse_max_diff`.
    pub collapse_witness: Option<[(NodeId, usize); 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LagReport {
    Applicable {
        lag: usize,
        tolerance: f64,
        recursion_holds: bool,
        window_collapse_holds: bool,
        stages: Vec<LagStage>,
    },
    Inapplicable {
        reason: String,
        nodes: Vec<NodeId>,
    },
}

fn bits(v: &[f64]) -> impl Iterator<Item = u64> + '_ {
    v.iter().map(|x| x.to_bits())
}

/// Whether two subtrees carry the same conditional law, observations and
/// feasible sets (children matched after sorting by observation).
fn same_subtree(tree: &ScenarioTree, cls: &PolicyClass, a: NodeId, b: NodeId) -> bool {
    let (ga, gb) = (cls.feasible(a), cls.feasible(b));
    if ga.len() != gb.len() || ga.iter().zip(gb).any(|(x, y)| !same_decision(x, y)) {
        return false;
    }
    let sorted = |n: NodeId| {
        let mut c = tree.children(n).to_vec();
        c.sort_by(|&i, &j| {
            let (ni, nj) = (&tree.nodes()[i], &tree.nodes()[j]);
            ni.obs
                .partial_cmp(&nj.obs)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ni.cond_prob.total_cmp(&nj.cond_prob))
        });
        c
    };
    let (ca, cb) = (sorted(a), sorted(b));
    ca.len() == cb.len()
        && ca.iter().zip(&cb).all(|(&x, &y)| {
            let (nx, ny) = (&tree.nodes()[x], &tree.nodes()[y]);
            nx.obs == ny.obs && (nx.cond_prob - ny.cond_prob).abs() <= 1e-12 && same_subtree(tree, cls, x, y)
        })
}

fn window_start(t: usize, lag: usize) -> usize {
    (t + 1).saturating_sub(lag)
}

/// First pair of same-stage nodes that share the last `lag` observations but
/// not their subtree.
fn lag_violation(tree: &ScenarioTree, cls: &PolicyClass, lag: usize) -> Result<Option<(NodeId, NodeId)>, DpError> {
    for t in 0..=tree.horizon() {
        let mut first: HashMap<Vec<u64>, NodeId> = HashMap::new();
        for &n in tree.stage_nodes(t) {
            let path = tree.path(n)?;
            let key: Vec<u64> = path[window_start(t, lag)..].iter().flat_map(|x| bits(x)).collect();
            match first.get(&key) {
                Some(&m) if !same_subtree(tree, cls, m, n) => return Ok(Some((m, n))),
                Some(_) => {}
                None => {
                    first.insert(key, n);
                }
            }
        }
    }
    Ok(None)
}

/// Checks the lag-ℓ recursion for Ṽ and that Ṽ_t only depends on the lag
/// window `x_{t-ℓ+1:t}, u_{t-ℓ+1:t-1}`.
pub fn lag_recursion_check(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    tol: f64,
) -> Result<LagReport, DpError> {
    let add = additive(cost)?;
    if !cls.is_decomposable() {
        return Err(DpError::NotDecomposable);
    }
    let (gamma, lag) = (add.gamma(), add.lag());
    if gamma == 0.0 && tree.horizon() > 0 {
        return Ok(LagReport::Inapplicable {
            reason: "γ = 0: the shifted values are undefined after stage 0".into(),
            nodes: Vec::new(),
        });
    }
    if let Some((a, b)) = lag_violation(tree, cls, lag)? {
        return Ok(LagReport::Inapplicable {
            reason: format!("nodes {a} and {b} share their last {lag} observations but not their conditional law"),
            nodes: vec![a, b],
        });
    }
    let tables = ValueTables::backward(tree, cost, cls, crate::value_process::DEFAULT_TABLE_CAP)?;
    let tilde = tilde_shift(tree, cost, cls, &tables)?;
    let mut stages = Vec::new();
    let (mut recursion_holds, mut collapse_holds) = (true, true);
    for t in 0..=tree.horizon() {
        let sign = gamma.powi(t as i32).signum();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut seen: HashMap<Vec<u64>, (NodeId, usize, f64)> = HashMap::new();
        let mut stage = LagStage {
            t,
            recursion_min_gap: None,
            recursion_max_gap: None,
            collapse_max_diff: 0.0,
            collapse_witness: None,
        };
        for &n in tree.stage_nodes(t) {
            let values = tilde.get(n).expect("γ ≠ 0");
            let xs = tree.path(n)?;
            let r = cls.grid(n).len();
            for (j, &value) in values.iter().enumerate() {
                let h = pre_history(tree, cls, &tables, n, j);
                let start = window_start(t, lag);
                let key: Vec<u64> = xs[start..]
                    .iter()
                    .flat_map(|x| bits(x))
                    .chain(u64::MAX..=u64::MAX)
                    .chain(h[start.min(t)..].iter().flat_map(|u| bits(u)))
                    .collect();
                match seen.get(&key) {
                    Some(&(m, i, other)) => {
                        let diff = (value - other).abs();
                        if diff > stage.collapse_max_diff {
                            stage.collapse_max_diff = diff;
                            stage.collapse_witness = Some([(m, i), (n, j)]);
                        }
                    }
                    None => {
                        seen.insert(key, (n, j, value));
                    }
                }
                if tree.is_leaf(n) {
                    continue;
                }
                let mut opt = if sign > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
                for (k, u) in cls.grid(n).iter().enumerate() {
                    let mut us = as_slices(&h);
                    us.push(u);
                    let e: f64 = tree
                        .children(n)
                        .iter()
                        .map(|&c| {
                            let xc = tree.path(c).expect("valid node");
                            let next = tilde.get(c).expect("γ ≠ 0")[j * r + k];
                            tree.nodes()[c].cond_prob * (add.stage(t + 1, &xc, &us) + gamma * next)
                        })
                        .sum();
                    opt = if sign > 0.0 { opt.min(e) } else { opt.max(e) };
                }
                let gap = sign * (value - opt);
                lo = lo.min(gap);
                hi = hi.max(gap);
            }
        }
        if lo <= hi {
            stage.recursion_min_gap = Some(lo);
            stage.recursion_max_gap = Some(hi);
            if lo < -tol || hi > tol {
                recursion_holds = false;
            }
        }
        if stage.collapse_max_diff > tol {
            collapse_holds = false;
        }
        stages.push(stage);
    }
    Ok(LagReport::Applicable { lag, tolerance: tol, recursion_holds, window_collapse_holds: collapse_holds, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::AdditiveCost;
    use crate::policy::{ClassKind, Decision};
    use crate::scenario_tree::TreeBuilder;
    use crate::value_process::backward_tables;

    fn grid(values: &[f64]) -> Vec<Decision> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn tracking(gamma: f64, lag: usize) -> CostSpec {
        CostSpec::additive(
            AdditiveCost::new(gamma, lag, |_t: usize, xs: &[&[f64]], us: &[&[f64]]| {
                let x = xs[xs.len() - 1][0];
                let u = us.last().map_or(0.0, |u| u[0]);
                (u - x).powi(2) + 0.1 * xs[0][0].abs()
            })
            .unwrap(),
        )
    }

    fn iid(depth: usize) -> ScenarioTree {
        let stage = vec![(0.4, vec![1.0]), (0.6, vec![-1.0])];
        ScenarioTree::product(vec![0.0], &vec![stage; depth]).unwrap()
    }

    #[test]
    fn shift_at_root_and_zero_costs() {
        let t = iid(2);
        let cost = tracking(0.5, 1);
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[-1.0, 0.0, 1.0])).unwrap();
        let tables = backward_tables(&t, &cost, &cls).unwrap();
        let tilde = tilde_shift(&t, &cost, &cls, &tables).unwrap();
        assert_eq!(tilde.get(0).unwrap()[0], tables.root_value());

        let zero = CostSpec::additive(AdditiveCost::new(0.5, 1, |_: usize, _: &[&[f64]], _: &[&[f64]]| 0.0).unwrap());
        let tables = backward_tables(&t, &zero, &cls).unwrap();
        let tilde = tilde_shift(&t, &zero, &cls, &tables).unwrap();
        for n in 0..t.len() {
            assert!(tilde.get(n).unwrap().iter().all(|&v| v == 0.0));
        }

        let cost = tracking(0.0, 1);
        let tables = backward_tables(&t, &cost, &cls).unwrap();
        let tilde = tilde_shift(&t, &cost, &cls, &tables).unwrap();
        assert!(tilde.get(0).is_some() && tilde.get(1).is_none());
        assert!(tilde.applicable(0) && !tilde.applicable(1));
    }

    #[test]
    fn recursion_and_collapse_on_iid_tree() {
        let t = iid(3);
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[-1.0, 0.0, 1.0])).unwrap();
        for gamma in [0.5, -0.5] {
            match lag_recursion_check(&t, &tracking(gamma, 1), &cls, 1e-9).unwrap() {
                LagReport::Applicable { recursion_holds, window_collapse_holds, stages, .. } => {
                    assert!(recursion_holds && window_collapse_holds, "{stages:?}");
                    assert_eq!(stages.len(), 4);
                }
                other => panic!("{other:?}"),
            }
        }
        // full-history window
        match lag_recursion_check(&t, &tracking(0.5, 3), &cls, 1e-9).unwrap() {
            LagReport::Applicable { recursion_holds, window_collapse_holds, .. } => {
                assert!(recursion_holds && window_collapse_holds);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_markov_tree_is_inapplicable() {
        let mut b = TreeBuilder::new(vec![0.0]);
        let a = b.child(0, 0.5, vec![1.0]);
        let c = b.child(0, 0.5, vec![2.0]);
        let a1 = b.child(a, 1.0, vec![5.0]);
        let c1 = b.child(c, 1.0, vec![5.0]);
        b.child(a1, 0.5, vec![0.0]);
        b.child(a1, 0.5, vec![1.0]);
        b.child(c1, 0.9, vec![0.0]);
        b.child(c1, 0.1, vec![1.0]);
        let t = b.build().unwrap();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 1.0])).unwrap();
        match lag_recursion_check(&t, &tracking(0.5, 1), &cls, 1e-9).unwrap() {
            LagReport::Inapplicable { nodes, .. } => assert_eq!(nodes, vec![a1, c1]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(lag_recursion_check(&t, &tracking(0.5, 2), &cls, 1e-9).unwrap(), LagReport::Applicable { .. }));
    }
}
