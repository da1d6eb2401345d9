use super::tables::{advance, ValueTables};
use super::ValueError;
use crate::cost::{CostError, CostSpec, HolderData};
use crate::policy::{Decision, PolicyClass};
use crate::scenario_tree::{NodeId, ScenarioTree};

const HOLDER_TOL: f64 = 1e-12;

/// Result of a local Hölder check over grid histories.
#[derive(Clone, Debug, PartialEq)]
pub struct HolderCheck {
    /// Pairs within distance `δ` that were compared.
    pub pairs: u64,
    /// Largest `|f(a) - f(b)| - C ‖a - b‖^α` seen; `-inf` when no pair was
    /// close enough.
    pub max_excess: f64,
    /// Node and the two histories attaining `max_excess`.
    pub worst: Option<(NodeId, Vec<Decision>, Vec<Decision>)>,
}

impl HolderCheck {
    fn empty() -> Self {
        Self { pairs: 0, max_excess: f64::NEG_INFINITY, worst: None }
    }

    pub fn holds(&self) -> bool {
        self.max_excess <= HOLDER_TOL
    }

    fn merge(&mut self, other: HolderCheck) {
        self.pairs += other.pairs;
        if other.max_excess > self.max_excess {
            self.max_excess = other.max_excess;
            self.worst = other.worst;
        }
    }
}

fn distance(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(*y).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

fn pairwise(node: NodeId, histories: &[Vec<&[f64]>], values: &[f64], data: HolderData) -> HolderCheck {
    let mut out = HolderCheck::empty();
    for i in 0..histories.len() {
        for j in i + 1..histories.len() {
            let d = distance(&histories[i], &histories[j]);
            if d > data.delta {
                continue;
            }
            out.pairs += 1;
            let excess = (values[i] - values[j]).abs() - data.bound(d);
            if excess > out.max_excess {
                out.max_excess = excess;
                let own = |h: &[&[f64]]| h.iter().map(|u| u.to_vec()).collect();
                out.worst = Some((node, own(&histories[i]), own(&histories[j])));
            }
        }
    }
    out
}

fn histories<'c>(cls: &'c PolicyClass, path: &[NodeId]) -> Vec<Vec<&'c [f64]>> {
    let grids: Vec<&[Decision]> = path.iter().map(|&m| cls.grid(m)).collect();
    let mut digits = vec![0usize; path.len()];
    let mut out = Vec::new();
    loop {
        out.push(digits.iter().zip(&grids).map(|(&d, g)| g[d].as_slice()).collect());
        if !advance(&mut digits, &grids) {
            break;
        }
    }
    out
}

fn grid_size(cls: &PolicyClass, path: &[NodeId]) -> u128 {
    path.iter()
        .try_fold(1u128, |acc, &m| acc.checked_mul(cls.grid(m).len() as u128))
        .unwrap_or(u128::MAX)
}

/// Checks the declared Hölder bound of `v` on every leaf and every pair of
/// grid histories within `δ`. `cap` bounds the number of histories per leaf.
pub fn verify_objective_holder(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    data: HolderData,
    cap: u128,
) -> Result<HolderCheck, ValueError> {
    let mut out = HolderCheck::empty();
    for leaf in tree.leaves() {
        let path = tree.path_ids(leaf)?;
        let count = grid_size(cls, &path);
        if count > cap {
            return Err(CostError::TooLarge { count, cap }.into());
        }
        let xs: Vec<&[f64]> = path.iter().map(|&m| tree.nodes()[m].obs.as_slice()).collect();
        let hs = histories(cls, &path);
        let values: Vec<f64> = hs.iter().map(|us| cost.eval(&xs, us)).collect();
        out.merge(pairwise(leaf, &hs, &values, data));
    }
    Ok(out)
}

/// Checks the same bound on the tabulated `v_t` and `V_t` at every node; on
/// the pre-decision tables histories are one decision shorter.
pub fn check_value_holder(
    tree: &ScenarioTree,
    cls: &PolicyClass,
    tables: &ValueTables,
    data: HolderData,
) -> Result<HolderCheck, ValueError> {
    let mut out = HolderCheck::empty();
    for n in 0..tree.len() {
        let path = tables.path(n);
        let hs = histories(cls, path);
        out.merge(pairwise(n, &hs, tables.post(n), data));
        let pre_hs = histories(cls, &path[..path.len() - 1]);
        out.merge(pairwise(n, &pre_hs, tables.pre(n), data));
    }
    Ok(out)
}
