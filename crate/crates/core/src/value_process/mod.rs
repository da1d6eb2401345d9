//! Intermediate value functions and value processes.
//!
//! For a node at stage `t` and a decision history `u_{:t}`,
//!
//! ```text
//! v_t(x_{:t}, u_{:t})   = min over tails ũ_{t+1:T} of E[v(X, u_{:t}, ũ_{t+1:T}(X)) | x_{:t}]
//! V_t(x_{:t}, u_{:t-1}) = min over ũ_t of v_t(x_{:t}, u_{:t-1}, ũ_t)
//! ```
//!
//! On a finite tree the essential infimum of a finite family is the pointwise
//! minimum, so both are exact minima over finite tail grids. The functions in
//! this module evaluate them straight from the definition; [`ValueTables`]
//! tabulates them for every grid history, either by backward recursion or by
//! the same definitional enumeration.

mod holder;
mod tables;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

pub use holder::{check_value_holder, verify_objective_holder, HolderCheck};
pub use tables::{backward_tables, RecursionGap, TableMethod, ValueTables, DEFAULT_TABLE_CAP};

use crate::cost::{CostError, CostSpec};
use crate::policy::{ClassKind, Decision, Policy, PolicyClass, PolicyError, DEFAULT_ENUMERATION_CAP};
use crate::scenario_tree::{NodeId, ScenarioTree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("essential infimum over an empty family is undefined")]
    EmptyFamily,
    #[error("family member {index} has {len} entries, expected {expected}")]
    FamilyShape { index: usize, len: usize, expected: usize },
    #[error("node {node}: decision history has {got} entries, expected {expected}")]
    HistoryLength { node: NodeId, expected: usize, got: usize },
    #[error("tail assignment misses descendant node {0}")]
    IncompleteTail(NodeId),
    #[error("tail enumeration below node {node} needs {count} assignments, cap is {cap}")]
    TooManyTails { node: NodeId, count: u128, cap: u128 },
    #[error("value tables need {entries} entries, cap is {cap}")]
    TableTooLarge { entries: u128, cap: u128 },
    #[error(
        "backward recursion requires a decomposable (nodewise) class; for {0:?} classes only v_t >= E[V_t+1] holds, use the definitional tables or post_decision_value/pre_decision_value"
    )]
    NotDecomposable(ClassKind),
    #[error("history is not on the class grid at node {0}")]
    OffGrid(NodeId),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Pointwise minimum of a finite family of functions on a common node set.
///
/// The result is a lower bound of every member and dominates every other
/// lower bound, i.e. it is the essential infimum on a finite space.
pub fn essential_infimum(family: &[Vec<f64>]) -> Result<Vec<f64>, ValueError> {
    let first = family.first().ok_or(ValueError::EmptyFamily)?;
    let mut out = first.clone();
    for (index, member) in family.iter().enumerate().skip(1) {
        if member.len() != out.len() {
            return Err(ValueError::FamilyShape { index, len: member.len(), expected: out.len() });
        }
        for (o, &m) in out.iter_mut().zip(member) {
            *o = o.min(m);
        }
    }
    Ok(out)
}

fn check_history(tree: &ScenarioTree, node: NodeId, len: usize, expected: usize) -> Result<(), ValueError> {
    tree.node(node)?;
    if len != expected {
        return Err(ValueError::HistoryLength { node, expected, got: len });
    }
    Ok(())
}

/// Leaves below a node with their conditional probability and the node ids
/// strictly below it on the way down.
struct Subtree<'t> {
    leaves: Vec<(f64, Vec<&'t [f64]>, Vec<NodeId>)>,
}

impl<'t> Subtree<'t> {
    fn new(tree: &'t ScenarioTree, node: NodeId) -> Result<Self, ValueError> {
        let depth = tree.stage(node) + 1;
        let leaves = tree
            .descendant_leaves(node)
            .into_iter()
            .map(|(leaf, p)| {
                let ids = tree.path_ids(leaf)?;
                let xs = ids.iter().map(|&n| tree.nodes()[n].obs.as_slice()).collect();
                Ok((p, xs, ids[depth..].to_vec()))
            })
            .collect::<Result<_, TreeError>>()?;
        Ok(Self { leaves })
    }

    fn value<'d, F>(&self, cost: &CostSpec, head: &[&'d [f64]], tail: F) -> f64
    where
        F: Fn(NodeId) -> &'d [f64],
    {
        let mut us: Vec<&[f64]> = Vec::with_capacity(head.len() + 4);
        let mut acc = 0.0;
        for (p, xs, below) in &self.leaves {
            us.clear();
            us.extend_from_slice(head);
            us.extend(below.iter().map(|&n| tail(n)));
            acc += p * cost.eval(xs, &us);
        }
        acc
    }
}

/// `v_{t,u_{:t}}^{ũ}(x_{:t})`: conditional expectation at `node` of the
/// objective under head `u_{:t}` and a fixed assignment of decisions to every
/// strict descendant.
pub fn tail_conditional_value(
    tree: &ScenarioTree,
    cost: &CostSpec,
    node: NodeId,
    head: &[Decision],
    tail: &BTreeMap<NodeId, Decision>,
) -> Result<f64, ValueError> {
    check_history(tree, node, head.len(), tree.stage(node) + 1)?;
    if let Some(&missing) = tree.descendants(node).iter().find(|n| !tail.contains_key(n)) {
        return Err(ValueError::IncompleteTail(missing));
    }
    let head: Vec<&[f64]> = head.iter().map(Vec::as_slice).collect();
    let sub = Subtree::new(tree, node)?;
    Ok(sub.value(cost, &head, |n| tail[&n].as_slice()))
}

/// Groups of strict descendants of `node` that must share a decision, with
/// the candidate values of each group.
fn tail_groups<'c>(tree: &ScenarioTree, cls: &'c PolicyClass, node: NodeId) -> Vec<(Vec<NodeId>, &'c [Decision])> {
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for n in tree.descendants(node) {
        groups.entry(cls.block_of(n)).or_default().push(n);
    }
    groups
        .into_iter()
        .map(|(b, nodes)| (nodes, cls.blocks()[b].candidates.as_slice()))
        .collect()
}

fn tail_count(groups: &[(Vec<NodeId>, &[Decision])]) -> u128 {
    groups
        .iter()
        .try_fold(1u128, |acc, (_, c)| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX)
}

/// Minimum of the tail value over every class-feasible tail below `node`,
/// for each of the given heads.
fn min_over_tails(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    node: NodeId,
    heads: &[Vec<&[f64]>],
    cap: u128,
) -> Result<Vec<f64>, ValueError> {
    let groups = tail_groups(tree, cls, node);
    let count = tail_count(&groups);
    if count > cap {
        return Err(ValueError::TooManyTails { node, count, cap });
    }
    let sub = Subtree::new(tree, node)?;
    let mut slot_of = vec![usize::MAX; tree.len()];
    for (g, (nodes, _)) in groups.iter().enumerate() {
        for &n in nodes {
            slot_of[n] = g;
        }
    }
    let mut best = vec![f64::INFINITY; heads.len()];
    let mut digits = vec![0usize; groups.len()];
    loop {
        let tail = |n: NodeId| groups[slot_of[n]].1[digits[slot_of[n]]].as_slice();
        for (b, head) in best.iter_mut().zip(heads) {
            let v = sub.value(cost, head, tail);
            if v < *b {
                *b = v;
            }
        }
        let mut carry = true;
        for (d, (_, cands)) in digits.iter_mut().zip(&groups).rev() {
            *d += 1;
            if *d < cands.len() {
                carry = false;
                break;
            }
            *d = 0;
        }
        if carry {
            break;
        }
    }
    Ok(best)
}

/// `v_t(x_{:t}, u_{:t})` at `node` by exhaustive enumeration of the feasible
/// tails. The head is a free parameter and need not lie on the class grid.
pub fn post_decision_value(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    node: NodeId,
    head: &[Decision],
) -> Result<f64, ValueError> {
    check_history(tree, node, head.len(), tree.stage(node) + 1)?;
    let head: Vec<&[f64]> = head.iter().map(Vec::as_slice).collect();
    Ok(min_over_tails(tree, cost, cls, node, &[head], DEFAULT_ENUMERATION_CAP)?[0])
}

/// `V_t(x_{:t}, u_{:t-1})` at `node`: minimum of [`post_decision_value`] over
/// the decisions the class allows at the node.
pub fn pre_decision_value(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    node: NodeId,
    head: &[Decision],
) -> Result<f64, ValueError> {
    check_history(tree, node, head.len(), tree.stage(node))?;
    let base: Vec<&[f64]> = head.iter().map(Vec::as_slice).collect();
    let heads: Vec<Vec<&[f64]>> = cls
        .grid(node)
        .iter()
        .map(|u| {
            let mut h = base.clone();
            h.push(u.as_slice());
            h
        })
        .collect();
    let values = min_over_tails(tree, cost, cls, node, &heads, DEFAULT_ENUMERATION_CAP)?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// Leaves with unconditional probabilities and their paths, for evaluating
/// `E v(X, U)`.
struct LeafPaths<'t> {
    leaves: Vec<(f64, Vec<&'t [f64]>, Vec<NodeId>)>,
}

impl<'t> LeafPaths<'t> {
    fn new(tree: &'t ScenarioTree) -> Result<Self, ValueError> {
        let sub = Subtree::new(tree, 0)?;
        Ok(Self {
            leaves: sub
                .leaves
                .into_iter()
                .map(|(p, xs, below)| {
                    let mut ids = vec![0];
                    ids.extend(below);
                    (p, xs, ids)
                })
                .collect(),
        })
    }

    fn expected<'d, F>(&self, cost: &CostSpec, decision: F) -> f64
    where
        F: Fn(NodeId) -> &'d [f64],
    {
        let mut us = Vec::new();
        self.leaves
            .iter()
            .map(|(p, xs, ids)| {
                us.clear();
                us.extend(ids.iter().map(|&n| decision(n)));
                p * cost.eval(xs, &us)
            })
            .sum()
    }
}

/// `E v(X, U)` for a policy.
pub fn expected_objective(tree: &ScenarioTree, cost: &CostSpec, policy: &Policy) -> Result<f64, ValueError> {
    policy.check_tree(tree)?;
    Ok(LeafPaths::new(tree)?.expected(cost, |n| policy.decision(n)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub value: f64,
    pub policy: Policy,
    /// Position of the minimizer in the enumeration order.
    pub index: u128,
    pub evaluated: u128,
}

/// Minimum of `E v(X, U)` over every policy of the class; ties go to the first
/// minimizer in enumeration order.
pub fn brute_force_optimum(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass) -> Result<BruteForce, ValueError> {
    brute_force_with_cap(tree, cost, cls, DEFAULT_ENUMERATION_CAP)
}

pub fn brute_force_with_cap(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    cap: u128,
) -> Result<BruteForce, ValueError> {
    let mut best: Option<(f64, u128, Policy)> = None;
    let mut evaluated = 0u128;
    let leaves = LeafPaths::new(tree)?;
    for (i, policy) in cls.enumerate_with_cap(cap)?.enumerate() {
        let value = leaves.expected(cost, |n| policy.decision(n));
        evaluated += 1;
        if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, i as u128, policy));
        }
    }
    let (value, index, policy) = best.expect("classes are nonempty");
    Ok(BruteForce { value, policy, index, evaluated })
}

/// Parallel variant of [`brute_force_with_cap`]; the reduction keeps the
/// smallest `(value, index)` so the result matches the sequential scan.
pub fn brute_force_parallel(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    cap: u128,
) -> Result<BruteForce, ValueError> {
    let count = cls.count();
    if count > cap {
        return Err(PolicyError::TooMany { count, cap }.into());
    }
    let leaves = LeafPaths::new(tree)?;
    let radices: Vec<u64> = cls.blocks().iter().map(|b| b.candidates.len() as u64).collect();
    let (value, index) = (0..count as u64)
        .into_par_iter()
        .map_init(
            || vec![0usize; radices.len()],
            |digits, i| {
                let mut rest = i;
                for (d, &r) in digits.iter_mut().zip(&radices).rev() {
                    *d = (rest % r) as usize;
                    rest /= r;
                }
                let v = leaves.expected(cost, |n| {
                    let b = cls.block_of(n);
                    cls.blocks()[b].candidates[digits[b]].as_slice()
                });
                (v, i)
            },
        )
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    Ok(BruteForce { value, policy: cls.policy_at(index as u128), index: index as u128, evaluated: count })
}

/// The value processes of a policy: `post[n] = v_t(x_{:t}, U_{:t})` and
/// `pre[n] = V_t(x_{:t}, U_{:t-1})` for every node `n` at stage `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueProcesses {
    pub post: Vec<f64>,
    pub pre: Vec<f64>,
}

/// Evaluates both value processes of a feasible policy.
pub fn value_process_for_policy(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    policy: &Policy,
) -> Result<ValueProcesses, ValueError> {
    cls.contains(policy)?;
    let tables = ValueTables::for_class(tree, cost, cls)?;
    tables.processes(tree, cls, policy)
}

/// Evaluates `v` on every leaf and every grid history and returns the
/// smallest value; fails when any value is not finite.
pub fn check_bounded_below(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    cap: u128,
) -> Result<f64, ValueError> {
    let mut count = 0u128;
    let mut paths = Vec::new();
    for leaf in tree.leaves() {
        let ids = tree.path_ids(leaf)?;
        let n = ids
            .iter()
            .try_fold(1u128, |acc, &id| acc.checked_mul(cls.grid(id).len() as u128))
            .unwrap_or(u128::MAX);
        count = count.saturating_add(n);
        paths.push((leaf, ids));
    }
    if count > cap {
        return Err(CostError::TooLarge { count, cap }.into());
    }
    let mut lowest = f64::INFINITY;
    for (leaf, ids) in paths {
        let xs: Vec<&[f64]> = ids.iter().map(|&n| tree.nodes()[n].obs.as_slice()).collect();
        let grids: Vec<&[Decision]> = ids.iter().map(|&n| cls.grid(n)).collect();
        let mut digits = vec![0usize; ids.len()];
        loop {
            let us: Vec<&[f64]> = digits.iter().zip(&grids).map(|(&d, g)| g[d].as_slice()).collect();
            let value = cost.eval(&xs, &us);
            if !value.is_finite() {
                return Err(CostError::NonFinite { leaf, value }.into());
            }
            lowest = lowest.min(value);
            if !tables::advance(&mut digits, &grids) {
                break;
            }
        }
    }
    Ok(lowest)
}
