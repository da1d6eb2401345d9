use rayon::prelude::*;

use super::{min_over_tails, ValueError, ValueProcesses};
use crate::cost::CostSpec;
use crate::policy::{ClassKind, Decision, Policy, PolicyClass};
use crate::scenario_tree::{NodeId, ScenarioTree};

/// Default cap on the total number of table entries.
pub const DEFAULT_TABLE_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableMethod {
    /// `v_T = v`, `V_t = min_u v_t`, `v_t = E[V_{t+1} | x_{:t}]`.
    Backward,
    /// Every entry is an explicit minimum over class-feasible tails.
    Definitional,
}

/// Advances mixed-radix digits (last digit fastest); false after the last.
pub(crate) fn advance(digits: &mut [usize], grids: &[&[Decision]]) -> bool {
    for (d, g) in digits.iter_mut().zip(grids).rev() {
        *d += 1;
        if *d < g.len() {
            return true;
        }
        *d = 0;
    }
    false
}

/// `v_t` and `V_t` at every node for every grid decision history.
///
/// Histories at a node are the grid indices of the decisions along its path,
/// encoded in mixed radix with the root digit most significant. With this
/// layout `post[n][i]` and `pre[c][i]` share the index `i` for every child `c`
/// of `n`, and `post[n][j * r + k]` extends pre-history `j` by grid entry `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables {
    method: TableMethod,
    kind: ClassKind,
    paths: Vec<Vec<NodeId>>,
    post: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Per-stage range of `v_t - E[V_{t+1} | x_{:t}]` over inner nodes and grid
/// histories.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionGap {
    pub stage: usize,
    pub min: f64,
    pub max: f64,
    /// Node and post-history index where the maximum is attained.
    pub witness: (NodeId, usize),
}

struct Layout {
    paths: Vec<Vec<NodeId>>,
    sizes: Vec<usize>,
}

fn layout(tree: &ScenarioTree, cls: &PolicyClass, cap: u128) -> Result<Layout, ValueError> {
    let mut paths = Vec::with_capacity(tree.len());
    let mut sizes = Vec::with_capacity(tree.len());
    let mut total = 0u128;
    for n in 0..tree.len() {
        let path = tree.path_ids(n)?;
        let size = path
            .iter()
            .try_fold(1u128, |acc, &m| acc.checked_mul(cls.grid(m).len() as u128))
            .unwrap_or(u128::MAX);
        total = total.saturating_add(size);
        paths.push(path);
        sizes.push(size.min(usize::MAX as u128) as usize);
    }
    if total > cap {
        return Err(ValueError::TableTooLarge { entries: total, cap });
    }
    Ok(Layout { paths, sizes })
}

fn grids<'c>(cls: &'c PolicyClass, path: &[NodeId]) -> Vec<&'c [Decision]> {
    path.iter().map(|&m| cls.grid(m)).collect()
}

/// Calls `f` with every grid history along `path`, in index order.
fn for_each_history<'c>(cls: &'c PolicyClass, path: &[NodeId], mut f: impl FnMut(&[&'c [f64]])) {
    let grids = grids(cls, path);
    let mut digits = vec![0usize; path.len()];
    let mut us: Vec<&[f64]> = Vec::with_capacity(path.len());
    loop {
        us.clear();
        us.extend(digits.iter().zip(&grids).map(|(&d, g)| g[d].as_slice()));
        f(&us);
        if !advance(&mut digits, &grids) {
            break;
        }
    }
}

fn leaf_values(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass, path: &[NodeId], size: usize) -> Vec<f64> {
    let xs: Vec<&[f64]> = path.iter().map(|&m| tree.nodes()[m].obs.as_slice()).collect();
    let mut out = Vec::with_capacity(size);
    for_each_history(cls, path, |us| out.push(cost.eval(&xs, us)));
    out
}

fn minimize_last(post: &[f64], radix: usize) -> Vec<f64> {
    post.chunks(radix)
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

/// Tables by backward recursion; exact for decomposable classes only.
pub fn backward_tables(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass) -> Result<ValueTables, ValueError> {
    ValueTables::backward(tree, cost, cls, DEFAULT_TABLE_CAP)
}

impl ValueTables {
    pub fn backward(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass, cap: u128) -> Result<Self, ValueError> {
        if !cls.is_decomposable() {
            return Err(ValueError::NotDecomposable(cls.kind()));
        }
        let Layout { paths, sizes } = layout(tree, cls, cap)?;
        let mut post: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
        let leaves: Vec<NodeId> = tree.leaves().collect();
        let leaf_tables: Vec<Vec<f64>> = leaves
            .par_iter()
            .map(|&leaf| leaf_values(tree, cost, cls, &paths[leaf], sizes[leaf]))
            .collect();
        for (leaf, table) in leaves.into_iter().zip(leaf_tables) {
            post[leaf] = table;
        }
        for t in (0..=tree.horizon()).rev() {
            for &n in tree.stage_nodes(t) {
                if !tree.is_leaf(n) {
                    let mut acc = vec![0.0; sizes[n]];
                    for &c in tree.children(n) {
                        let p = tree.nodes()[c].cond_prob;
                        for (a, &v) in acc.iter_mut().zip(&pre[c]) {
                            *a += p * v;
                        }
                    }
                    post[n] = acc;
                }
                pre[n] = minimize_last(&post[n], cls.grid(n).len());
            }
        }
        Ok(Self { method: TableMethod::Backward, kind: cls.kind(), paths, post, pre })
    }

    /// Tables straight from the definition of `v_t`, valid for any class.
    pub fn definitional(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass, cap: u128) -> Result<Self, ValueError> {
        let Layout { paths, sizes } = layout(tree, cls, cap)?;
        let post = (0..tree.len())
            .into_par_iter()
            .map(|n| {
                if tree.is_leaf(n) {
                    return Ok(leaf_values(tree, cost, cls, &paths[n], sizes[n]));
                }
                let mut heads = Vec::with_capacity(sizes[n]);
                for_each_history(cls, &paths[n], |us| heads.push(us.to_vec()));
                min_over_tails(tree, cost, cls, n, &heads, cap)
            })
            .collect::<Result<Vec<_>, ValueError>>()?;
        let pre = (0..tree.len()).map(|n| minimize_last(&post[n], cls.grid(n).len())).collect();
        Ok(Self { method: TableMethod::Definitional, kind: cls.kind(), paths, post, pre })
    }

    /// Backward recursion when the class allows it, the definition otherwise.
    pub fn for_class(tree: &ScenarioTree, cost: &CostSpec, cls: &PolicyClass) -> Result<Self, ValueError> {
        if cls.is_decomposable() {
            Self::backward(tree, cost, cls, DEFAULT_TABLE_CAP)
        } else {
            Self::definitional(tree, cost, cls, DEFAULT_TABLE_CAP)
        }
    }

    pub fn method(&self) -> TableMethod {
        self.method
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.post.len()
    }

    /// `v_t` at `node`, indexed by post-decision history.
    pub fn post(&self, node: NodeId) -> &[f64] {
        &self.post[node]
    }

    /// `V_t` at `node`, indexed by pre-decision history.
    pub fn pre(&self, node: NodeId) -> &[f64] {
        &self.pre[node]
    }

    /// `V_0`, the optimal value over the class.
    pub fn root_value(&self) -> f64 {
        self.pre[0][0]
    }

    /// Node ids from the root to `node`.
    pub fn path(&self, node: NodeId) -> &[NodeId] {
        &self.paths[node]
    }

    /// Index of the history with the given grid digits (one per path node).
    pub fn history_index(&self, cls: &PolicyClass, node: NodeId, digits: &[usize]) -> Result<usize, ValueError> {
        let path = &self.paths[node];
        if digits.len() > path.len() {
            return Err(ValueError::HistoryLength { node, expected: path.len(), got: digits.len() });
        }
        let mut index = 0usize;
        for (&d, &m) in digits.iter().zip(path) {
            let r = cls.grid(m).len();
            if d >= r {
                return Err(ValueError::OffGrid(node));
            }
            index = index * r + d;
        }
        Ok(index)
    }

    /// Decisions of the history with the given post-history index.
    pub fn history(&self, cls: &PolicyClass, node: NodeId, mut index: usize) -> Vec<Decision> {
        let path = &self.paths[node];
        let mut out = vec![Vec::new(); path.len()];
        for (slot, &m) in out.iter_mut().zip(path).rev() {
            let g = cls.grid(m);
            *slot = g[index % g.len()].clone();
            index /= g.len();
        }
        out
    }

    /// Forward pass choosing the first grid minimizer of `v_t` at each node.
    pub fn greedy_policy(&self, tree: &ScenarioTree, cls: &PolicyClass) -> Policy {
        let mut decisions = vec![Vec::new(); tree.len()];
        let mut post_index = vec![0usize; tree.len()];
        for t in 0..=tree.horizon() {
            for &n in tree.stage_nodes(t) {
                let base = tree.nodes()[n].parent.map_or(0, |p| post_index[p]);
                let r = cls.grid(n).len();
                let row = &self.post[n][base * r..(base + 1) * r];
                let mut k = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v < row[k] {
                        k = i;
                    }
                }
                decisions[n] = cls.grid(n)[k].clone();
                post_index[n] = base * r + k;
            }
        }
        Policy::new(cls.decision_dim(), decisions).expect("grid decisions have class dimension")
    }

    /// Both value processes along a policy on the class grid.
    pub fn processes(&self, tree: &ScenarioTree, cls: &PolicyClass, policy: &Policy) -> Result<ValueProcesses, ValueError> {
        let digits = cls.indices(policy)?;
        let mut post = vec![0.0; tree.len()];
        let mut pre = vec![0.0; tree.len()];
        let mut post_index = vec![0usize; tree.len()];
        for t in 0..=tree.horizon() {
            for &n in tree.stage_nodes(t) {
                let base = tree.nodes()[n].parent.map_or(0, |p| post_index[p]);
                let i = base * cls.grid(n).len() + digits[n];
                post_index[n] = i;
                post[n] = self.post[n][i];
                pre[n] = self.pre[n][base];
            }
        }
        Ok(ValueProcesses { post, pre })
    }

    /// Range of `v_t - E[V_{t+1} | x_{:t}]` per stage `t < T`. The lower end
    /// is never below zero; decomposable classes give zero throughout.
    pub fn expectation_gaps(&self, tree: &ScenarioTree) -> Vec<RecursionGap> {
        (0..tree.horizon())
            .map(|t| {
                let mut gap = RecursionGap { stage: t, min: f64::INFINITY, max: f64::NEG_INFINITY, witness: (0, 0) };
                for &n in tree.stage_nodes(t) {
                    if tree.is_leaf(n) {
                        continue;
                    }
                    for (i, &v) in self.post[n].iter().enumerate() {
                        let e: f64 = tree
                            .children(n)
                            .iter()
                            .map(|&c| tree.nodes()[c].cond_prob * self.pre[c][i])
                            .sum();
                        let d = v - e;
                        gap.min = gap.min.min(d);
                        if d > gap.max {
                            gap.max = d;
                            gap.witness = (n, i);
                        }
                    }
                }
                gap
            })
            .collect()
    }
}
