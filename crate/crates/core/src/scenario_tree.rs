//! Finite filtered probability spaces encoded as rooted scenario trees.
//!
//! Depth-`t` nodes are the atoms of `σ(X_0, …, X_t)`. Probabilities are stored
//! per edge (conditional on the parent); the root carries the deterministic
//! start value `x_0`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Sibling probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node at position {position} has id {id}; ids must be dense 0..N-1 in order")]
    NonDenseIds { position: usize, id: NodeId },
    #[error("root node 0 must not have a parent")]
    RootHasParent,
    #[error("node {node} references unknown parent {parent}")]
    UnknownParent { node: NodeId, parent: NodeId },
    #[error("parent chain of node {0} contains a cycle")]
    Cycle(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("function value missing on child {child} of node {at}")]
    IncompleteFunction { at: NodeId, child: NodeId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub stage: usize,
    #[serde(default)]
    pub parent: Option<NodeId>,
    pub cond_prob: f64,
    pub obs: Vec<f64>,
}

/// A broken structural invariant found by [`ScenarioTree::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub node: NodeId,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    RootStage { stage: usize },
    RootProbability { cond_prob: f64 },
    MissingParent,
    StageMismatch { parent_stage: usize, stage: usize },
    ProbabilityOutOfRange { cond_prob: f64 },
    ChildProbabilitySum { sum: f64 },
    LeafWrongStage { stage: usize, horizon: usize },
    StageBeyondHorizon { stage: usize, horizon: usize },
    ObservationDimension { len: usize, expected: usize },
    NonFiniteObservation,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: ", self.node)?;
        match &self.kind {
            ViolationKind::RootStage { stage } => write!(f, "root at stage {stage}, expected 0"),
            ViolationKind::RootProbability { cond_prob } => {
                write!(f, "root cond_prob {cond_prob}, expected 1")
            }
            ViolationKind::MissingParent => write!(f, "non-root node without parent"),
            ViolationKind::StageMismatch { parent_stage, stage } => {
                write!(f, "stage {stage} under parent at stage {parent_stage}")
            }
            ViolationKind::ProbabilityOutOfRange { cond_prob } => {
                write!(f, "cond_prob {cond_prob} outside (0, 1]")
            }
            ViolationKind::ChildProbabilitySum { sum } => {
                write!(f, "children probabilities sum to {sum}, expected 1")
            }
            ViolationKind::LeafWrongStage { stage, horizon } => {
                write!(f, "leaf at wrong stage {stage}, horizon is {horizon}")
            }
            ViolationKind::StageBeyondHorizon { stage, horizon } => {
                write!(f, "stage {stage} exceeds horizon {horizon}")
            }
            ViolationKind::ObservationDimension { len, expected } => {
                write!(f, "observation has dimension {len}, expected {expected}")
            }
            ViolationKind::NonFiniteObservation => write!(f, "observation is not finite"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TreeFile {
    horizon: usize,
    obs_dim: usize,
    nodes: Vec<Node>,
}

/// Rooted scenario tree. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeFile", into = "TreeFile")]
pub struct ScenarioTree {
    horizon: usize,
    obs_dim: usize,
    nodes: Vec<Node>,
    children: Vec<Vec<NodeId>>,
    by_stage: Vec<Vec<NodeId>>,
}

impl TryFrom<TreeFile> for ScenarioTree {
    type Error = TreeError;

    fn try_from(file: TreeFile) -> Result<Self, TreeError> {
        ScenarioTree::new(file.horizon, file.obs_dim, file.nodes)
    }
}

impl From<ScenarioTree> for TreeFile {
    fn from(tree: ScenarioTree) -> Self {
        TreeFile {
            horizon: tree.horizon,
            obs_dim: tree.obs_dim,
            nodes: tree.nodes,
        }
    }
}

impl ScenarioTree {
    /// Builds a tree from raw nodes.
    ///
    /// Only the structure needed for indexing is enforced here (dense ids,
    /// parent references, acyclicity). Probabilistic and stage invariants are
    /// reported by [`ScenarioTree::validate`].
    pub fn new(horizon: usize, obs_dim: usize, nodes: Vec<Node>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        for (position, node) in nodes.iter().enumerate() {
            if node.id != position {
                return Err(TreeError::NonDenseIds { position, id: node.id });
            }
        }
        if nodes[0].parent.is_some() {
            return Err(TreeError::RootHasParent);
        }
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        for node in &nodes[1..] {
            if let Some(parent) = node.parent {
                if parent >= n {
                    return Err(TreeError::UnknownParent { node: node.id, parent });
                }
                children[parent].push(node.id);
            }
        }
        for node in &nodes {
            let mut cursor = node.parent;
            let mut steps = 0;
            while let Some(p) = cursor {
                steps += 1;
                if steps > n {
                    return Err(TreeError::Cycle(node.id));
                }
                cursor = nodes[p].parent;
            }
        }
        let max_stage = nodes.iter().map(|nd| nd.stage).max().unwrap_or(0);
        let mut by_stage = vec![Vec::new(); max_stage.max(horizon) + 1];
        for node in &nodes {
            by_stage[node.stage].push(node.id);
        }
        Ok(Self {
            horizon,
            obs_dim,
            nodes,
            children,
            by_stage,
        })
    }

    /// Deterministic single-path tree through the given observations.
    pub fn chain(observations: Vec<Vec<f64>>) -> Result<Self, TreeError> {
        let mut iter = observations.into_iter();
        let root = iter.next().ok_or(TreeError::Empty)?;
        let mut builder = TreeBuilder::new(root);
        let mut last = 0;
        for obs in iter {
            last = builder.child(last, 1.0, obs);
        }
        builder.build()
    }

    /// Product tree of a stagewise-independent process: every stage-`t` node
    /// branches into the same atoms `(probability, observation)` of stage `t+1`.
    pub fn product(root_obs: Vec<f64>, stages: &[Vec<(f64, Vec<f64>)>]) -> Result<Self, TreeError> {
        let mut builder = TreeBuilder::new(root_obs);
        let mut frontier = vec![0];
        for atoms in stages {
            let mut next = Vec::with_capacity(frontier.len() * atoms.len());
            for &parent in &frontier {
                for (prob, obs) in atoms {
                    next.push(builder.child(parent, *prob, obs.clone()));
                }
            }
            frontier = next;
        }
        builder.build()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn stage(&self, id: NodeId) -> usize {
        self.nodes[id].stage
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.children[id].is_empty()
    }

    /// Nodes at stage `t`, in id order.
    pub fn stage_nodes(&self, t: usize) -> &[NodeId] {
        self.by_stage.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&id| self.is_leaf(id))
    }

    /// Node ids from the root down to `id` (inclusive).
    pub fn path_ids(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.node(id)?;
        let mut ids = vec![id];
        let mut cursor = self.nodes[id].parent;
        while let Some(p) = cursor {
            ids.push(p);
            cursor = self.nodes[p].parent;
        }
        ids.reverse();
        Ok(ids)
    }

    /// Observations `x_{:t}` along the root-to-node path.
    pub fn path(&self, id: NodeId) -> Result<Vec<&[f64]>, TreeError> {
        Ok(self
            .path_ids(id)?
            .into_iter()
            .map(|n| self.nodes[n].obs.as_slice())
            .collect())
    }

    pub fn unconditional_probability(&self, id: NodeId) -> Result<f64, TreeError> {
        Ok(self
            .path_ids(id)?
            .into_iter()
            .map(|n| self.nodes[n].cond_prob)
            .product())
    }

    /// `Σ_children cond_prob(child) · f(child)`.
    pub fn conditional_expectation<F>(&self, at: NodeId, f: F) -> Result<f64, TreeError>
    where
        F: Fn(NodeId) -> Option<f64>,
    {
        self.node(at)?;
        let mut acc = 0.0;
        for &child in &self.children[at] {
            let value = f(child).ok_or(TreeError::IncompleteFunction { at, child })?;
            acc += self.nodes[child].cond_prob * value;
        }
        Ok(acc)
    }

    /// Leaves below `at` with their probability conditional on `at`, in
    /// depth-first order.
    pub fn descendant_leaves(&self, at: NodeId) -> Vec<(NodeId, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![(at, 1.0)];
        while let Some((id, prob)) = stack.pop() {
            if self.is_leaf(id) {
                out.push((id, prob));
            } else {
                for &c in self.children[id].iter().rev() {
                    stack.push((c, prob * self.nodes[c].cond_prob));
                }
            }
        }
        out
    }

    /// Strict descendants of `at`, in depth-first preorder.
    pub fn descendants(&self, at: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.children[at].iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.children[id].iter().rev());
        }
        out
    }

    /// Checks every structural and probabilistic invariant; an empty result
    /// means the tree is a valid finite filtered probability space.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node, kind| out.push(Violation { node, kind });
        let root = &self.nodes[0];
        if root.stage != 0 {
            push(0, ViolationKind::RootStage { stage: root.stage });
        }
        if root.cond_prob != 1.0 {
            push(0, ViolationKind::RootProbability { cond_prob: root.cond_prob });
        }
        for node in &self.nodes {
            if node.obs.len() != self.obs_dim {
                push(
                    node.id,
                    ViolationKind::ObservationDimension {
                        len: node.obs.len(),
                        expected: self.obs_dim,
                    },
                );
            }
            if node.obs.iter().any(|x| !x.is_finite()) {
                push(node.id, ViolationKind::NonFiniteObservation);
            }
            if node.stage > self.horizon {
                push(
                    node.id,
                    ViolationKind::StageBeyondHorizon {
                        stage: node.stage,
                        horizon: self.horizon,
                    },
                );
            }
            if node.id != 0 {
                match node.parent {
                    None => push(node.id, ViolationKind::MissingParent),
                    Some(p) => {
                        let parent_stage = self.nodes[p].stage;
                        if parent_stage + 1 != node.stage {
                            push(
                                node.id,
                                ViolationKind::StageMismatch {
                                    parent_stage,
                                    stage: node.stage,
                                },
                            );
                        }
                    }
                }
                if !(node.cond_prob > 0.0 && node.cond_prob <= 1.0) {
                    push(node.id, ViolationKind::ProbabilityOutOfRange { cond_prob: node.cond_prob });
                }
            }
            let kids = &self.children[node.id];
            if kids.is_empty() {
                if node.stage < self.horizon {
                    push(
                        node.id,
                        ViolationKind::LeafWrongStage {
                            stage: node.stage,
                            horizon: self.horizon,
                        },
                    );
                }
            } else {
                let sum: f64 = kids.iter().map(|&c| self.nodes[c].cond_prob).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    push(node.id, ViolationKind::ChildProbabilitySum { sum });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Incremental construction of a tree from the root down.
#[derive(Clone, Debug)]
pub struct TreeBuilder {
    obs_dim: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new(root_obs: Vec<f64>) -> Self {
        Self {
            obs_dim: root_obs.len(),
            nodes: vec![Node {
                id: 0,
                stage: 0,
                parent: None,
                cond_prob: 1.0,
                obs: root_obs,
            }],
        }
    }

    /// Appends a child and returns its id.
    pub fn child(&mut self, parent: NodeId, cond_prob: f64, obs: Vec<f64>) -> NodeId {
        let id = self.nodes.len();
        let stage = self.nodes[parent].stage + 1;
        self.nodes.push(Node {
            id,
            stage,
            parent: Some(parent),
            cond_prob,
            obs,
        });
        id
    }

    /// Finishes the tree; the horizon is the deepest stage added.
    pub fn build(self) -> Result<ScenarioTree, TreeError> {
        let horizon = self.nodes.iter().map(|n| n.stage).max().unwrap_or(0);
        ScenarioTree::new(horizon, self.obs_dim, self.nodes)
    }
}
