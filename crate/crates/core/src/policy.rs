//! Nonanticipative controls on a scenario tree.
//!
//! A [`Policy`] attaches one decision to every node, so it is adapted to the
//! natural filtration by construction. The path-indexed ("leafwise") form is
//! what an arbitrary control process looks like before factorization; the
//! Doob-Dynkin factorization recovers the node form whenever the leafwise
//! process is adapted.
//!
//! A [`PolicyClass`] is a product over *blocks* of nodes that must share one
//! decision: singleton blocks give the decomposable nodewise class, one block
//! per stage gives the history-blind class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario_tree::{NodeId, ScenarioTree, TreeError};

pub type Decision = Vec<f64>;

/// Two decisions are the same when every component agrees to this tolerance.
pub const DECISION_TOL: f64 = 1e-12;

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

pub fn same_decision(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DECISION_TOL)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy covers {got} nodes, tree has {expected}")]
    Length { got: usize, expected: usize },
    #[error("missing decision for node {0}")]
    MissingNode(NodeId),
    #[error("decision at node {node} has dimension {got}, expected {expected}")]
    Dimension { node: NodeId, got: usize, expected: usize },
    #[error("feasible set at node {0} is empty")]
    EmptyFeasible(NodeId),
    #[error("stage {0}: no decision is feasible at every node of the stage")]
    EmptyStageCandidates(usize),
    #[error("enumeration of {count} policies exceeds the cap of {cap}")]
    TooMany { count: u128, cap: u128 },
    #[error("no decisions given for leaf {0}")]
    MissingLeaf(NodeId),
    #[error("leaf {leaf}: expected {expected} stage decisions, got {got}")]
    LeafLength { leaf: NodeId, expected: usize, got: usize },
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("cannot factorize: stage-{stage} decision differs across leaves below node {node}")]
    NotAdapted { node: NodeId, stage: usize },
    #[error("decision at node {node} is not in the feasible set")]
    Infeasible { node: NodeId },
    #[error(
        "pasting is infeasible: history-blind stage {stage} gets differing decisions at nodes {first} and {second}"
    )]
    NotDecomposable { stage: usize, first: NodeId, second: NodeId },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PolicyFile {
    decision_dim: usize,
    decisions: BTreeMap<NodeId, Decision>,
}

/// One decision per tree node, indexed by node id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    decision_dim: usize,
    decisions: Vec<Decision>,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = PolicyError;

    fn try_from(file: PolicyFile) -> Result<Self, PolicyError> {
        let n = file.decisions.len();
        let mut decisions = Vec::with_capacity(n);
        for id in 0..n {
            let d = file.decisions.get(&id).ok_or(PolicyError::MissingNode(id))?;
            decisions.push(d.clone());
        }
        Policy::new(file.decision_dim, decisions)
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile {
            decision_dim: p.decision_dim,
            decisions: p.decisions.into_iter().enumerate().collect(),
        }
    }
}

impl Policy {
    pub fn new(decision_dim: usize, decisions: Vec<Decision>) -> Result<Self, PolicyError> {
        for (node, d) in decisions.iter().enumerate() {
            if d.len() != decision_dim {
                return Err(PolicyError::Dimension { node, got: d.len(), expected: decision_dim });
            }
        }
        Ok(Self { decision_dim, decisions })
    }

    pub fn constant(tree: &ScenarioTree, decision: Decision) -> Self {
        Self {
            decision_dim: decision.len(),
            decisions: vec![decision; tree.len()],
        }
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn decision(&self, node: NodeId) -> &[f64] {
        &self.decisions[node]
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn with_decision(mut self, node: NodeId, decision: Decision) -> Self {
        self.decisions[node] = decision;
        self
    }

    pub fn check_tree(&self, tree: &ScenarioTree) -> Result<(), PolicyError> {
        if self.decisions.len() != tree.len() {
            return Err(PolicyError::Length { got: self.decisions.len(), expected: tree.len() });
        }
        Ok(())
    }

    /// Decisions `u_{:t}` along the root-to-node path.
    pub fn along_path(&self, tree: &ScenarioTree, node: NodeId) -> Result<Vec<&[f64]>, PolicyError> {
        self.check_tree(tree)?;
        Ok(tree
            .path_ids(node)?
            .into_iter()
            .map(|n| self.decisions[n].as_slice())
            .collect())
    }
}

/// Control process indexed by leaf (scenario): `leaf → (u_0, …, u_T)`.
pub type LeafwisePolicy = BTreeMap<NodeId, Vec<Decision>>;

pub fn policy_to_leafwise(tree: &ScenarioTree, policy: &Policy) -> Result<LeafwisePolicy, PolicyError> {
    policy.check_tree(tree)?;
    let mut out = BTreeMap::new();
    for leaf in tree.leaves() {
        let path = tree.path_ids(leaf)?;
        out.insert(leaf, path.into_iter().map(|n| policy.decisions[n].clone()).collect());
    }
    Ok(out)
}

/// Per node, the stage decision of the first descendant leaf together with the
/// first node where two leaves disagree.
fn representatives(
    tree: &ScenarioTree,
    leafwise: &LeafwisePolicy,
) -> Result<(Vec<Option<Decision>>, Option<(NodeId, usize)>), PolicyError> {
    for &leaf in leafwise.keys() {
        if leaf >= tree.len() {
            return Err(TreeError::UnknownNode(leaf).into());
        }
        if !tree.is_leaf(leaf) {
            return Err(PolicyError::NotALeaf(leaf));
        }
    }
    let mut rep: Vec<Option<Decision>> = vec![None; tree.len()];
    let mut conflict: Option<(NodeId, usize)> = None;
    for leaf in tree.leaves() {
        let decisions = leafwise.get(&leaf).ok_or(PolicyError::MissingLeaf(leaf))?;
        let path = tree.path_ids(leaf)?;
        if decisions.len() != path.len() {
            return Err(PolicyError::LeafLength { leaf, expected: path.len(), got: decisions.len() });
        }
        for (stage, (&node, d)) in path.iter().zip(decisions).enumerate() {
            match &rep[node] {
                None => rep[node] = Some(d.clone()),
                Some(r) => {
                    if !same_decision(r, d) && conflict.is_none_or(|(n, _)| node < n) {
                        conflict = Some((node, stage));
                    }
                }
            }
        }
    }
    Ok((rep, conflict))
}

/// Whether every `u_t` is constant on the atoms of `σ(X_{:t})`.
pub fn check_adapted(tree: &ScenarioTree, leafwise: &LeafwisePolicy) -> Result<bool, PolicyError> {
    Ok(representatives(tree, leafwise)?.1.is_none())
}

/// Doob-Dynkin factorization of an adapted leafwise control into node form.
pub fn doob_dynkin_factorize(tree: &ScenarioTree, leafwise: &LeafwisePolicy) -> Result<Policy, PolicyError> {
    let (rep, conflict) = representatives(tree, leafwise)?;
    if let Some((node, stage)) = conflict {
        return Err(PolicyError::NotAdapted { node, stage });
    }
    let decisions: Vec<Decision> = rep
        .into_iter()
        .enumerate()
        .map(|(n, d)| d.ok_or(PolicyError::MissingNode(n)))
        .collect::<Result<_, _>>()?;
    let dim = decisions.first().map_or(0, Vec::len);
    Policy::new(dim, decisions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    /// Decisions chosen per node independently.
    Nodewise,
    /// All nodes of a stage share one decision value.
    HistoryBlind,
}

/// Nodes that must carry the same decision, with the values they may take.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub nodes: Vec<NodeId>,
    pub candidates: Vec<Decision>,
}

/// Serialized form of a [`PolicyClass`]; resolving it needs the tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFile {
    pub kind: ClassKind,
    pub decision_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<BTreeMap<NodeId, Vec<Decision>>>,
    /// Shorthand: the same grid at every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Decision>>,
}

impl ClassFile {
    pub fn resolve(&self, tree: &ScenarioTree) -> Result<PolicyClass, PolicyError> {
        let feasible = match (&self.feasible, &self.grid) {
            (Some(map), _) => (0..tree.len())
                .map(|n| map.get(&n).cloned().ok_or(PolicyError::EmptyFeasible(n)))
                .collect::<Result<Vec<_>, _>>()?,
            (None, Some(grid)) => vec![grid.clone(); tree.len()],
            (None, None) => return Err(PolicyError::EmptyFeasible(0)),
        };
        PolicyClass::new(tree, self.kind, self.decision_dim, feasible)
    }
}

/// Finite class of admissible policies.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyClass {
    kind: ClassKind,
    decision_dim: usize,
    feasible: Vec<Vec<Decision>>,
    blocks: Vec<Block>,
    block_of: Vec<usize>,
    stage_of: Vec<usize>,
}

impl PolicyClass {
    pub fn new(
        tree: &ScenarioTree,
        kind: ClassKind,
        decision_dim: usize,
        feasible: Vec<Vec<Decision>>,
    ) -> Result<Self, PolicyError> {
        if feasible.len() != tree.len() {
            return Err(PolicyError::Length { got: feasible.len(), expected: tree.len() });
        }
        for (node, set) in feasible.iter().enumerate() {
            if set.is_empty() {
                return Err(PolicyError::EmptyFeasible(node));
            }
            if let Some(d) = set.iter().find(|d| d.len() != decision_dim) {
                return Err(PolicyError::Dimension { node, got: d.len(), expected: decision_dim });
            }
        }
        let stage_of: Vec<usize> = (0..tree.len()).map(|n| tree.stage(n)).collect();
        let mut blocks = Vec::new();
        let mut block_of = vec![0; tree.len()];
        match kind {
            ClassKind::Nodewise => {
                for (node, set) in feasible.iter().enumerate() {
                    block_of[node] = blocks.len();
                    blocks.push(Block { nodes: vec![node], candidates: set.clone() });
                }
            }
            ClassKind::HistoryBlind => {
                let mut stages: Vec<(usize, &[NodeId])> = (0..=tree.horizon())
                    .map(|t| (t, tree.stage_nodes(t)))
                    .filter(|(_, nodes)| !nodes.is_empty())
                    .collect();
                stages.sort_by_key(|(_, nodes)| nodes[0]);
                for (t, nodes) in stages {
                    let first = &feasible[nodes[0]];
                    let candidates: Vec<Decision> = first
                        .iter()
                        .filter(|d| nodes.iter().all(|&n| feasible[n].iter().any(|e| same_decision(d, e))))
                        .cloned()
                        .collect();
                    if candidates.is_empty() {
                        return Err(PolicyError::EmptyStageCandidates(t));
                    }
                    for &n in nodes {
                        block_of[n] = blocks.len();
                    }
                    blocks.push(Block { nodes: nodes.to_vec(), candidates });
                }
            }
        }
        Ok(Self { kind, decision_dim, feasible, blocks, block_of, stage_of })
    }

    /// Same grid at every node.
    pub fn uniform(tree: &ScenarioTree, kind: ClassKind, grid: Vec<Decision>) -> Result<Self, PolicyError> {
        let dim = grid.first().map_or(0, Vec::len);
        Self::new(tree, kind, dim, vec![grid; tree.len()])
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.block_of.len()
    }

    /// Feasible set as supplied for the node.
    pub fn feasible(&self, node: NodeId) -> &[Decision] {
        &self.feasible[node]
    }

    /// Decisions a member of the class can take at `node`.
    pub fn grid(&self, node: NodeId) -> &[Decision] {
        &self.blocks[self.block_of[node]].candidates
    }

    pub fn index_of(&self, node: NodeId, decision: &[f64]) -> Option<usize> {
        self.grid(node).iter().position(|d| same_decision(d, decision))
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_of(&self, node: NodeId) -> usize {
        self.block_of[node]
    }

    pub fn stage_of(&self, node: NodeId) -> usize {
        self.stage_of[node]
    }

    /// Decomposable in the pasting sense: nodewise, or history-blind where no
    /// stage has both several nodes and several candidate values.
    pub fn is_decomposable(&self) -> bool {
        match self.kind {
            ClassKind::Nodewise => true,
            ClassKind::HistoryBlind => self
                .blocks
                .iter()
                .all(|b| b.nodes.len() < 2 || b.candidates.len() < 2),
        }
    }

    /// Number of policies in the class, saturating at `u128::MAX`.
    pub fn count(&self) -> u128 {
        self.blocks
            .iter()
            .try_fold(1u128, |acc, b| acc.checked_mul(b.candidates.len() as u128))
            .unwrap_or(u128::MAX)
    }

    pub fn enumerate(&self) -> Result<Policies<'_>, PolicyError> {
        self.enumerate_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    /// Every policy exactly once, in lexicographic order of the block indices
    /// (blocks ordered by their smallest node id, last block fastest).
    pub fn enumerate_with_cap(&self, cap: u128) -> Result<Policies<'_>, PolicyError> {
        let count = self.count();
        if count > cap {
            return Err(PolicyError::TooMany { count, cap });
        }
        Ok(Policies { class: self, digits: vec![0; self.blocks.len()], done: false })
    }

    /// The policy at position `index` of the enumeration order.
    pub fn policy_at(&self, mut index: u128) -> Policy {
        let mut digits = vec![0; self.blocks.len()];
        for (slot, block) in digits.iter_mut().zip(&self.blocks).rev() {
            let radix = block.candidates.len() as u128;
            *slot = (index % radix) as usize;
            index /= radix;
        }
        self.build(&digits)
    }

    fn build(&self, digits: &[usize]) -> Policy {
        let decisions = (0..self.block_of.len())
            .map(|n| {
                let b = self.block_of[n];
                self.blocks[b].candidates[digits[b]].clone()
            })
            .collect();
        Policy { decision_dim: self.decision_dim, decisions }
    }

    /// Grid index of the policy's decision at every node.
    pub fn indices(&self, policy: &Policy) -> Result<Vec<usize>, PolicyError> {
        self.contains(policy)?;
        Ok((0..policy.len())
            .map(|n| self.index_of(n, policy.decision(n)).expect("checked by contains"))
            .collect())
    }

    /// Ok when the policy belongs to the class.
    pub fn contains(&self, policy: &Policy) -> Result<(), PolicyError> {
        if policy.len() != self.block_of.len() {
            return Err(PolicyError::Length { got: policy.len(), expected: self.block_of.len() });
        }
        for block in &self.blocks {
            let first = policy.decision(block.nodes[0]);
            if !block.candidates.iter().any(|c| same_decision(c, first)) {
                return Err(PolicyError::Infeasible { node: block.nodes[0] });
            }
            if let Some(&other) = block.nodes[1..]
                .iter()
                .find(|&&n| !same_decision(policy.decision(n), first))
            {
                return Err(PolicyError::NotDecomposable {
                    stage: self.stage_of[other],
                    first: block.nodes[0],
                    second: other,
                });
            }
        }
        Ok(())
    }

    /// The pasting `u_A`: `u1` on nodes whose descendant leaves all lie in `a`,
    /// `u2` elsewhere.
    ///
    /// Returns [`PolicyError::NotDecomposable`] when the pasted policy leaves
    /// the class, which only history-blind classes can do.
    pub fn paste(
        &self,
        tree: &ScenarioTree,
        u1: &Policy,
        u2: &Policy,
        a: &BTreeSet<NodeId>,
    ) -> Result<Policy, PolicyError> {
        self.contains(u1)?;
        self.contains(u2)?;
        for &leaf in a {
            if leaf >= tree.len() {
                return Err(TreeError::UnknownNode(leaf).into());
            }
            if !tree.is_leaf(leaf) {
                return Err(PolicyError::NotALeaf(leaf));
            }
        }
        let decisions = (0..tree.len())
            .map(|n| {
                let inside = tree.descendant_leaves(n).iter().all(|(leaf, _)| a.contains(leaf));
                if inside { u1.decision(n) } else { u2.decision(n) }.to_vec()
            })
            .collect();
        let pasted = Policy { decision_dim: self.decision_dim, decisions };
        self.contains(&pasted)?;
        Ok(pasted)
    }

    pub fn to_file(&self) -> ClassFile {
        ClassFile {
            kind: self.kind,
            decision_dim: self.decision_dim,
            feasible: Some(self.feasible.iter().cloned().enumerate().collect()),
            grid: None,
        }
    }
}

/// Iterator over all policies of a class.
pub struct Policies<'a> {
    class: &'a PolicyClass,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for Policies<'_> {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        if self.done {
            return None;
        }
        let out = self.class.build(&self.digits);
        self.done = true;
        for (slot, block) in self.digits.iter_mut().zip(&self.class.blocks).rev() {
            *slot += 1;
            if *slot < block.candidates.len() {
                self.done = false;
                break;
            }
            *slot = 0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::TreeBuilder;

    fn two_leaf() -> ScenarioTree {
        let mut b = TreeBuilder::new(vec![0.0]);
        b.child(0, 0.5, vec![1.0]);
        b.child(0, 0.5, vec![2.0]);
        b.build().unwrap()
    }

    fn binary_t2() -> ScenarioTree {
        let mut b = TreeBuilder::new(vec![0.0]);
        let a = b.child(0, 0.5, vec![1.0]);
        let c = b.child(0, 0.5, vec![2.0]);
        for p in [a, c] {
            b.child(p, 0.5, vec![3.0]);
            b.child(p, 0.5, vec![4.0]);
        }
        b.build().unwrap()
    }

    fn grid(values: &[f64]) -> Vec<Decision> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn enumeration_counts() {
        let t = two_leaf();
        let nodewise = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 1.0])).unwrap();
        assert_eq!(nodewise.enumerate().unwrap().count(), 8);
        let blind = PolicyClass::uniform(&t, ClassKind::HistoryBlind, grid(&[0.0, 1.0])).unwrap();
        assert_eq!(blind.enumerate().unwrap().count(), 4);
        let t2 = binary_t2();
        let big = PolicyClass::uniform(&t2, ClassKind::Nodewise, grid(&[0.0, 1.0, 2.0])).unwrap();
        let all: Vec<Policy> = big.enumerate().unwrap().collect();
        assert_eq!(all.len(), 2187);
        let distinct: BTreeSet<Vec<u64>> = all
            .iter()
            .map(|p| p.decisions().iter().map(|d| d[0].to_bits()).collect())
            .collect();
        assert_eq!(distinct.len(), 2187);
    }

    #[test]
    fn enumeration_order_matches_policy_at() {
        let t = binary_t2();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 1.0])).unwrap();
        for (i, p) in cls.enumerate().unwrap().enumerate() {
            assert_eq!(p, cls.policy_at(i as u128));
        }
        let first = cls.policy_at(0);
        let second = cls.policy_at(1);
        assert_eq!(first.decision(6), &[0.0]);
        assert_eq!(second.decision(6), &[1.0]);
        assert_eq!(second.decision(0), &[0.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let t = binary_t2();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(
            cls.enumerate_with_cap(100).err(),
            Some(PolicyError::TooMany { count: 2187, cap: 100 })
        );
    }

    #[test]
    fn adaptedness() {
        let t = two_leaf();
        let constant: LeafwisePolicy = t.leaves().map(|l| (l, vec![vec![1.0], vec![1.0]])).collect();
        assert!(check_adapted(&t, &constant).unwrap());
        let mut anticipative = constant.clone();
        anticipative.insert(2, vec![vec![9.0], vec![1.0]]);
        assert!(!check_adapted(&t, &anticipative).unwrap());
        assert_eq!(
            doob_dynkin_factorize(&t, &anticipative),
            Err(PolicyError::NotAdapted { node: 0, stage: 0 })
        );
        let mut missing = constant;
        missing.remove(&1);
        assert_eq!(check_adapted(&t, &missing), Err(PolicyError::MissingLeaf(1)));
    }

    #[test]
    fn factorize_recourse() {
        let t = two_leaf();
        let mut lw = LeafwisePolicy::new();
        lw.insert(1, vec![vec![0.0], vec![5.0]]);
        lw.insert(2, vec![vec![0.0], vec![7.0]]);
        let p = doob_dynkin_factorize(&t, &lw).unwrap();
        assert_eq!(p.decision(1), &[5.0]);
        assert_eq!(p.decision(2), &[7.0]);
        assert_eq!(policy_to_leafwise(&t, &p).unwrap(), lw);
        let c = Policy::constant(&t, vec![3.0, 4.0]);
        let back = doob_dynkin_factorize(&t, &policy_to_leafwise(&t, &c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn pasting() {
        let t = binary_t2();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 1.0])).unwrap();
        let u1 = Policy::constant(&t, vec![1.0]);
        let u2 = Policy::constant(&t, vec![0.0]);
        let all: BTreeSet<NodeId> = t.leaves().collect();
        assert_eq!(cls.paste(&t, &u1, &u2, &all).unwrap(), u1);
        assert_eq!(cls.paste(&t, &u1, &u2, &BTreeSet::new()).unwrap(), u2);
        let under_a: BTreeSet<NodeId> = [3, 4].into();
        let mixed = cls.paste(&t, &u1, &u2, &under_a).unwrap();
        let expected: Vec<f64> = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(mixed.decisions().iter().map(|d| d[0]).collect::<Vec<_>>(), expected);
        assert!(cls.contains(&mixed).is_ok());

        let blind = PolicyClass::uniform(&t, ClassKind::HistoryBlind, grid(&[0.0, 1.0])).unwrap();
        assert!(!blind.is_decomposable());
        let err = blind.paste(&t, &u1, &u2, &under_a).unwrap_err();
        assert!(matches!(err, PolicyError::NotDecomposable { stage: 1, first: 1, second: 2 }));
        assert_eq!(blind.paste(&t, &u1, &u2, &[0].into()), Err(PolicyError::NotALeaf(0)));
    }

    #[test]
    fn history_blind_candidates_intersect() {
        let t = two_leaf();
        let feasible = vec![grid(&[0.0]), grid(&[1.0, 2.0, 3.0]), grid(&[3.0, 2.0])];
        let cls = PolicyClass::new(&t, ClassKind::HistoryBlind, 1, feasible).unwrap();
        assert_eq!(cls.grid(1), &grid(&[2.0, 3.0])[..]);
        assert_eq!(cls.count(), 2);
        let feasible = vec![grid(&[0.0]), grid(&[1.0]), grid(&[2.0])];
        assert_eq!(
            PolicyClass::new(&t, ClassKind::HistoryBlind, 1, feasible),
            Err(PolicyError::EmptyStageCandidates(1))
        );
    }

    #[test]
    fn json_formats() {
        let t = two_leaf();
        let p = Policy::new(1, vec![vec![0.0], vec![5.0], vec![7.0]]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"decision_dim":1,"decisions":{"0":[0.0],"1":[5.0],"2":[7.0]}}"#);
        assert_eq!(serde_json::from_str::<Policy>(&text).unwrap(), p);
        let file: ClassFile =
            serde_json::from_str(r#"{"kind":"history_blind","decision_dim":1,"grid":[[0],[1]]}"#).unwrap();
        let cls = file.resolve(&t).unwrap();
        assert_eq!(cls.kind(), ClassKind::HistoryBlind);
        assert_eq!(cls.count(), 4);
        let again = cls.to_file().resolve(&t).unwrap();
        assert_eq!(again, cls);
    }
}
