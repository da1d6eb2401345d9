//! Martingale tests of value processes, the dynamic relations along a
//! policy, and the interchange of minimum and expectation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostSpec;
use crate::policy::{same_decision, Decision, Policy, PolicyClass, PolicyError};
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::value_process::{expected_objective, ValueError, ValueTables};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("process has {got} values, tree has {expected} nodes")]
    MissingValues { expected: usize, got: usize },
    #[error("process value at node {0} is not finite")]
    NonFinite(NodeId),
    #[error("family is empty")]
    EmptyFamily,
    #[error("family member {member} has {got} entries, expected {expected}")]
    FamilyShape { member: usize, got: usize, expected: usize },
    #[error("probabilities must be nonnegative and sum to 1 (got sum {0})")]
    Probabilities(f64),
    #[error("interchange family would have {count} members, cap is {cap}")]
    TooMany { count: u128, cap: u128 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Neither,
    Submartingale,
    Martingale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Optimal,
    NotOptimal,
    Inconclusive,
}

/// Range over the inner nodes of stage `t` of `E(P_{t+1} | node) - P_t(node)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSlack {
    pub t: usize,
    pub max_slack: f64,
    pub min_slack: f64,
}

/// The inner node whose slack is furthest from zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub node: NodeId,
    pub stage: usize,
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub classification: Classification,
    pub verdict: Option<Verdict>,
    pub per_stage_slack: Vec<StageSlack>,
    pub witness: Option<Witness>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    /// `E v(X, U)` of the verified policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_value: Option<f64>,
    /// `V_0` over the class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_decision: Option<Box<MartingaleReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_decision: Option<Box<MartingaleReport>>,
}

/// Classifies a process given by one value per node.
pub fn check_submartingale(tree: &ScenarioTree, process: &[f64], tol: f64) -> Result<MartingaleReport, VerifyError> {
    if process.len() != tree.len() {
        return Err(VerifyError::MissingValues { expected: tree.len(), got: process.len() });
    }
    if let Some(n) = process.iter().position(|v| !v.is_finite()) {
        return Err(VerifyError::NonFinite(n));
    }
    let mut per_stage = Vec::new();
    let mut witness: Option<Witness> = None;
    let mut classification = Classification::Martingale;
    for t in 0..tree.horizon() {
        let mut stage = StageSlack { t, max_slack: f64::NEG_INFINITY, min_slack: f64::INFINITY };
        for &n in tree.stage_nodes(t) {
            if tree.is_leaf(n) {
                continue;
            }
            let e: f64 = tree
                .children(n)
                .iter()
                .map(|&c| tree.nodes()[c].cond_prob * process[c])
                .sum();
            let slack = e - process[n];
            stage.max_slack = stage.max_slack.max(slack);
            stage.min_slack = stage.min_slack.min(slack);
            if slack < -tol {
                classification = Classification::Neither;
            } else if slack > tol {
                classification = classification.min(Classification::Submartingale);
            }
            if witness.as_ref().is_none_or(|w| slack.abs() > w.slack.abs()) {
                witness = Some(Witness { node: n, stage: t, slack, process: None });
            }
        }
        if stage.min_slack <= stage.max_slack {
            per_stage.push(stage);
        }
    }
    if classification == Classification::Martingale {
        witness = None;
    }
    Ok(MartingaleReport {
        classification,
        verdict: None,
        per_stage_slack: per_stage,
        witness,
        tolerance: tol,
        explanation: None,
        policy_value: None,
        optimal_value: None,
        post_decision: None,
        pre_decision: None,
    })
}

/// Martingale test of both value processes of a feasible policy.
///
/// For decomposable classes the policy is declared optimal iff both processes
/// are martingales and `v_0(U_0) = V_0`; the last condition only matters when
/// `T = 0`, where the martingale conditions are empty. Other classes get an
/// inconclusive verdict.
pub fn verify_policy(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    policy: &Policy,
    tol: f64,
) -> Result<MartingaleReport, VerifyError> {
    cls.contains(policy)?;
    let tables = ValueTables::for_class(tree, cost, cls)?;
    verify_with_tables(tree, cost, cls, &tables, policy, tol)
}

/// [`verify_policy`] with precomputed tables, for sweeps over many policies.
pub fn verify_with_tables(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    tables: &ValueTables,
    policy: &Policy,
    tol: f64,
) -> Result<MartingaleReport, VerifyError> {
    let processes = tables.processes(tree, cls, policy)?;
    let mut post = check_submartingale(tree, &processes.post, tol)?;
    let mut pre = check_submartingale(tree, &processes.pre, tol)?;
    let tag = |r: &mut MartingaleReport, name: &str| {
        if let Some(w) = &mut r.witness {
            w.process = Some(name.to_string());
        }
    };
    tag(&mut post, "post_decision");
    tag(&mut pre, "pre_decision");

    let classification = post.classification.min(pre.classification);
    let mut per_stage_slack = Vec::new();
    for t in 0..tree.horizon() {
        let rows: Vec<&StageSlack> =
            post.per_stage_slack.iter().chain(&pre.per_stage_slack).filter(|s| s.t == t).collect();
        if rows.is_empty() {
            continue;
        }
        per_stage_slack.push(StageSlack {
            t,
            max_slack: rows.iter().map(|s| s.max_slack).fold(f64::NEG_INFINITY, f64::max),
            min_slack: rows.iter().map(|s| s.min_slack).fold(f64::INFINITY, f64::min),
        });
    }
    let witness = [&post.witness, &pre.witness]
        .into_iter()
        .flatten()
        .fold(None::<&Witness>, |best, w| match best {
            Some(b) if b.slack.abs() >= w.slack.abs() => Some(b),
            _ => Some(w),
        })
        .cloned();
    let root_gap = processes.post[0] - processes.pre[0];
    let (verdict, explanation) = if !cls.is_decomposable() {
        (
            Verdict::Inconclusive,
            Some(format!(
                "{:?} class is not decomposable; the martingale criterion only certifies optimality for decomposable classes",
                cls.kind()
            )),
        )
    } else if classification == Classification::Martingale && root_gap.abs() <= tol {
        (Verdict::Optimal, None)
    } else if classification == Classification::Martingale {
        (Verdict::NotOptimal, Some(format!("v_0(U_0) exceeds V_0 by {root_gap}")))
    } else {
        (Verdict::NotOptimal, None)
    };
    Ok(MartingaleReport {
        classification,
        verdict: Some(verdict),
        per_stage_slack,
        witness,
        tolerance: tol,
        explanation,
        policy_value: Some(expected_objective(tree, cost, policy)?),
        optimal_value: Some(tables.root_value()),
        post_decision: Some(Box::new(post)),
        pre_decision: Some(Box::new(pre)),
    })
}

/// Range of one relation's gap (left side minus right side) over a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRange {
    pub min_gap: f64,
    pub max_gap: f64,
    /// Inner nodes where the gap exceeds the tolerance.
    pub strict_nodes: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRelations {
    pub t: usize,
    /// `V_t^U - min_{u_t} E(V_{t+1}^{U'} | ·)` where `U'` deviates at stage `t`.
    pub pre_decision: RelationRange,
    /// `v_t^U - E(ess inf_{U'} v_{t+1}^{U'} | ·)` where `U'` deviates at `t + 1`.
    pub post_decision: RelationRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    pub tolerance: f64,
    /// Every gap is at least `-tolerance`.
    pub inequalities_hold: bool,
    /// Every gap is within `tolerance` of zero.
    pub equality_everywhere: bool,
    pub stages: Vec<StageRelations>,
}

impl RelationRange {
    fn new() -> Self {
        Self { min_gap: f64::INFINITY, max_gap: f64::NEG_INFINITY, strict_nodes: Vec::new() }
    }

    fn add(&mut self, node: NodeId, gap: f64, tol: f64) {
        self.min_gap = self.min_gap.min(gap);
        self.max_gap = self.max_gap.max(gap);
        if gap > tol {
            self.strict_nodes.push(node);
        }
    }
}

/// Checks the dynamic relations between consecutive value processes along a
/// feasible policy at every inner node.
pub fn check_dynamic_relations(
    tree: &ScenarioTree,
    cost: &CostSpec,
    cls: &PolicyClass,
    policy: &Policy,
    tol: f64,
) -> Result<DynamicReport, VerifyError> {
    let digits = cls.indices(policy)?;
    let tables = ValueTables::for_class(tree, cost, cls)?;
    let processes = tables.processes(tree, cls, policy)?;
    // pre-history index of every node along the policy
    let mut base = vec![0usize; tree.len()];
    for t in 1..=tree.horizon() {
        for &n in tree.stage_nodes(t) {
            let p = tree.nodes()[n].parent.expect("non-root");
            base[n] = base[p] * cls.grid(p).len() + digits[p];
        }
    }
    let mut stages = Vec::new();
    let (mut holds, mut equal) = (true, true);
    for t in 0..tree.horizon() {
        let mut rel = StageRelations { t, pre_decision: RelationRange::new(), post_decision: RelationRange::new() };
        for &n in tree.stage_nodes(t) {
            if tree.is_leaf(n) {
                continue;
            }
            let r = cls.grid(n).len();
            let expect = |i: usize| -> f64 {
                tree.children(n).iter().map(|&c| tree.nodes()[c].cond_prob * tables.pre(c)[i]).sum()
            };
            let best = (0..r).map(|k| expect(base[n] * r + k)).fold(f64::INFINITY, f64::min);
            rel.pre_decision.add(n, processes.pre[n] - best, tol);
            let own = expect(base[n] * r + digits[n]);
            rel.post_decision.add(n, processes.post[n] - own, tol);
        }
        for range in [&rel.pre_decision, &rel.post_decision] {
            if range.min_gap < -tol {
                holds = false;
            }
            if range.min_gap < -tol || range.max_gap > tol {
                equal = false;
            }
        }
        if rel.pre_decision.min_gap <= rel.pre_decision.max_gap {
            stages.push(rel);
        }
    }
    Ok(DynamicReport { tolerance: tol, inequalities_hold: holds, equality_everywhere: equal, stages })
}

/// Single-stage data for the interchange of minimum and expectation: node
/// probabilities and the value `v(x_i, u)` for each node `i` and choice `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterchangeInstance {
    pub probs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterchangeWitness {
    /// Member attaining the minimum of expectations.
    pub minimizer: usize,
    /// Node where another member does strictly better.
    pub node: NodeId,
    pub better_member: usize,
    pub minimizer_value: f64,
    pub better_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterchangeReport {
    /// `E[min_f f]`.
    pub lhs: f64,
    /// `min_f E[f]`.
    pub rhs: f64,
    pub gap: f64,
    pub members: usize,
    pub witness: Option<InterchangeWitness>,
}

fn check_probs(probs: &[f64]) -> Result<(), VerifyError> {
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(VerifyError::Probabilities(sum));
    }
    Ok(())
}

/// Compares `E[min_f f]` with `min_f E[f]` for a finite family of functions
/// on the nodes of one stage; `family[j][i]` is member `j` at node `i`.
pub fn interchange_gap(probs: &[f64], family: &[Vec<f64>], tol: f64) -> Result<InterchangeReport, VerifyError> {
    check_probs(probs)?;
    if family.is_empty() {
        return Err(VerifyError::EmptyFamily);
    }
    if let Some((member, f)) = family.iter().enumerate().find(|(_, f)| f.len() != probs.len()) {
        return Err(VerifyError::FamilyShape { member, got: f.len(), expected: probs.len() });
    }
    let pointwise = crate::value_process::essential_infimum(family)?;
    let lhs: f64 = probs.iter().zip(&pointwise).map(|(p, v)| p * v).sum();
    let mut rhs = f64::INFINITY;
    let mut minimizer = 0;
    for (j, f) in family.iter().enumerate() {
        let e: f64 = probs.iter().zip(f).map(|(p, v)| p * v).sum();
        if e < rhs {
            rhs = e;
            minimizer = j;
        }
    }
    let gap = rhs - lhs;
    let witness = if gap > tol {
        (0..probs.len())
            .filter(|&i| probs[i] > 0.0)
            .find(|&i| pointwise[i] < family[minimizer][i])
            .map(|i| {
                let better = family.iter().position(|f| f[i] == pointwise[i]).expect("attained");
                InterchangeWitness {
                    minimizer,
                    node: i,
                    better_member: better,
                    minimizer_value: family[minimizer][i],
                    better_value: pointwise[i],
                }
            })
    } else {
        None
    };
    Ok(InterchangeReport { lhs, rhs, gap, members: family.len(), witness })
}

impl InterchangeInstance {
    fn check(&self) -> Result<usize, VerifyError> {
        check_probs(&self.probs)?;
        if self.values.len() != self.probs.len() {
            return Err(VerifyError::FamilyShape { member: 0, got: self.values.len(), expected: self.probs.len() });
        }
        if self.values.iter().any(Vec::is_empty) {
            return Err(VerifyError::EmptyFamily);
        }
        Ok(self.values.iter().map(Vec::len).min().unwrap_or(0))
    }

    /// Every choice combination across nodes: the nodewise class.
    pub fn nodewise_family(&self, cap: u128) -> Result<Vec<Vec<f64>>, VerifyError> {
        self.check()?;
        let count = self
            .values
            .iter()
            .try_fold(1u128, |acc, v| acc.checked_mul(v.len() as u128))
            .unwrap_or(u128::MAX);
        if count > cap {
            return Err(VerifyError::TooMany { count, cap });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut digits = vec![0usize; self.values.len()];
        'outer: loop {
            out.push(digits.iter().zip(&self.values).map(|(&d, v)| v[d]).collect());
            for (d, v) in digits.iter_mut().zip(&self.values).rev() {
                *d += 1;
                if *d < v.len() {
                    continue 'outer;
                }
                *d = 0;
            }
            break;
        }
        Ok(out)
    }

    /// One shared choice index at every node: the history-blind class. Only
    /// choices available at every node take part.
    pub fn history_blind_family(&self) -> Result<Vec<Vec<f64>>, VerifyError> {
        let shared = self.check()?;
        Ok((0..shared).map(|k| self.values.iter().map(|v| v[k]).collect()).collect())
    }

    /// Stage `t` of a tree with unconditional node probabilities and the
    /// values of `v` on a common grid.
    pub fn from_tree_stage<F>(tree: &ScenarioTree, t: usize, grid: &[Decision], v: F) -> Result<Self, VerifyError>
    where
        F: Fn(NodeId, &[f64]) -> f64,
    {
        let nodes = tree.stage_nodes(t);
        let probs = nodes
            .iter()
            .map(|&n| tree.unconditional_probability(n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| VerifyError::Value(e.into()))?;
        let values = nodes.iter().map(|&n| grid.iter().map(|u| v(n, u)).collect()).collect();
        Ok(Self { probs, values })
    }

    /// Two equally likely nodes with values `(1, 9)` and `(9, 1)` for the two
    /// choices.
    pub fn builtin() -> Self {
        Self { probs: vec![0.5, 0.5], values: vec![vec![1.0, 9.0], vec![9.0, 1.0]] }
    }
}

/// Outcome of the monotone interchange check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MonotoneReport {
    Applicable {
        report: InterchangeReport,
        equal: bool,
    },
    Inapplicable {
        reason: String,
        /// Members or nodes involved in the violated precondition.
        witness: Vec<usize>,
    },
}

fn componentwise_min(a: &[f64], b: &[f64]) -> Decision {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).collect()
}

fn dominated(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Interchange for a class closed under componentwise minimum with `v(x, ·)`
/// nondecreasing; both preconditions are checked on the given members.
/// `members[j][i]` is the decision of member `j` at node `i`.
pub fn interchange_monotone<F>(probs: &[f64], members: &[Vec<Decision>], v: F, tol: f64) -> Result<MonotoneReport, VerifyError>
where
    F: Fn(NodeId, &[f64]) -> f64,
{
    check_probs(probs)?;
    if members.is_empty() {
        return Err(VerifyError::EmptyFamily);
    }
    if let Some((member, m)) = members.iter().enumerate().find(|(_, m)| m.len() != probs.len()) {
        return Err(VerifyError::FamilyShape { member, got: m.len(), expected: probs.len() });
    }
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let meet: Vec<Decision> =
                members[a].iter().zip(&members[b]).map(|(x, y)| componentwise_min(x, y)).collect();
            let closed = members
                .iter()
                .any(|m| m.iter().zip(&meet).all(|(x, y)| same_decision(x, y)));
            if !closed {
                return Ok(MonotoneReport::Inapplicable {
                    reason: format!("class is not closed under pairwise minimum: min of members {a} and {b} is missing"),
                    witness: vec![a, b],
                });
            }
        }
    }
    for i in 0..probs.len() {
        let decisions: Vec<&Decision> = members.iter().map(|m| &m[i]).collect();
        for (a, da) in decisions.iter().enumerate() {
            for (b, db) in decisions.iter().enumerate() {
                if dominated(da, db) && v(i, da) > v(i, db) + tol {
                    return Ok(MonotoneReport::Inapplicable {
                        reason: format!("objective is not nondecreasing at node {i} (members {a} and {b})"),
                        witness: vec![i, a, b],
                    });
                }
            }
        }
    }
    let family: Vec<Vec<f64>> =
        members.iter().map(|m| m.iter().enumerate().map(|(i, u)| v(i, u)).collect()).collect();
    let report = interchange_gap(probs, &family, tol)?;
    let equal = report.gap.abs() <= tol;
    Ok(MonotoneReport::Applicable { report, equal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ClassKind;
    use crate::scenario_tree::TreeBuilder;
    use crate::value_process::{backward_tables, brute_force_optimum};

    fn grid(values: &[f64]) -> Vec<Decision> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn binary() -> ScenarioTree {
        let mut b = TreeBuilder::new(vec![0.0]);
        let a = b.child(0, 0.3, vec![1.0]);
        let c = b.child(0, 0.7, vec![-1.0]);
        b.child(a, 0.5, vec![2.0]);
        b.child(a, 0.5, vec![0.0]);
        b.child(c, 1.0, vec![-1.0]);
        b.build().unwrap()
    }

    fn tracking() -> CostSpec {
        CostSpec::general(|xs: &[&[f64]], us: &[&[f64]]| {
            xs.iter().zip(us).map(|(x, u)| (u[0] - x[0]).powi(2)).sum::<f64>()
        })
    }

    #[test]
    fn constant_and_drift_processes() {
        let t = binary();
        let r = check_submartingale(&t, &[3.0; 6], 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Martingale);
        assert!(r.witness.is_none());
        let drift: Vec<f64> = (0..t.len()).map(|n| t.stage(n) as f64).collect();
        let r = check_submartingale(&t, &drift, 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Submartingale);
        assert_eq!(r.per_stage_slack.len(), 2);
        assert!(r.per_stage_slack.iter().all(|s| s.min_slack == 1.0 && s.max_slack == 1.0));
        let down: Vec<f64> = drift.iter().map(|v| -v).collect();
        assert_eq!(check_submartingale(&t, &down, 1e-9).unwrap().classification, Classification::Neither);
        assert_eq!(
            check_submartingale(&t, &[0.0; 3], 1e-9),
            Err(VerifyError::MissingValues { expected: 6, got: 3 })
        );
    }

    #[test]
    fn optimal_and_perturbed_policies() {
        let t = binary();
        let cost = tracking();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[-1.0, 0.0, 1.0, 2.0])).unwrap();
        let best = backward_tables(&t, &cost, &cls).unwrap().greedy_policy(&t, &cls);
        let r = verify_policy(&t, &cost, &cls, &best, 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Martingale);
        assert_eq!(r.verdict, Some(Verdict::Optimal));
        assert!((r.policy_value.unwrap() - brute_force_optimum(&t, &cost, &cls).unwrap().value).abs() < 1e-12);

        let worse = best.clone().with_decision(1, vec![-1.0]);
        let r = verify_policy(&t, &cost, &cls, &worse, 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Submartingale);
        assert_eq!(r.verdict, Some(Verdict::NotOptimal));
        let w = r.witness.unwrap();
        // u_1 at node 1 moves from 1 to -1, which costs 4 more
        assert_eq!((w.node, w.process.as_deref()), (1, Some("pre_decision")));
        assert!((w.slack - 4.0).abs() < 1e-12);
        assert!((r.per_stage_slack[0].max_slack - 0.3 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_stage_problems() {
        let t = ScenarioTree::chain(vec![vec![0.4]]).unwrap();
        let cost = tracking();
        let cls = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[0.0, 0.5, 1.0])).unwrap();
        let good = Policy::constant(&t, vec![0.5]);
        let r = verify_policy(&t, &cost, &cls, &good, 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Martingale);
        assert_eq!(r.verdict, Some(Verdict::Optimal));
        // no inner nodes, so only the root link can detect a bad decision
        let bad = Policy::constant(&t, vec![1.0]);
        let r = verify_policy(&t, &cost, &cls, &bad, 1e-9).unwrap();
        assert_eq!(r.classification, Classification::Martingale);
        assert_eq!(r.verdict, Some(Verdict::NotOptimal));
    }

    #[test]
    fn history_blind_is_inconclusive() {
        let t = binary();
        let cost = tracking();
        let cls = PolicyClass::uniform(&t, ClassKind::HistoryBlind, grid(&[-1.0, 0.0, 1.0])).unwrap();
        let u = Policy::constant(&t, vec![0.0]);
        let r = verify_policy(&t, &cost, &cls, &u, 1e-9).unwrap();
        assert_eq!(r.verdict, Some(Verdict::Inconclusive));
        assert!(r.explanation.is_some());
        let infeasible = u.with_decision(1, vec![1.0]);
        assert!(matches!(verify_policy(&t, &cost, &cls, &infeasible, 1e-9), Err(VerifyError::Policy(_))));
    }

    #[test]
    fn dynamic_relations() {
        let t = binary();
        let cost = tracking();
        let nodewise = PolicyClass::uniform(&t, ClassKind::Nodewise, grid(&[-1.0, 0.0, 1.0])).unwrap();
        let u = Policy::constant(&t, vec![0.0]);
        let r = check_dynamic_relations(&t, &cost, &nodewise, &u, 1e-9).unwrap();
        assert!(r.inequalities_hold && r.equality_everywhere);
        let blind = PolicyClass::uniform(&t, ClassKind::HistoryBlind, grid(&[-1.0, 0.0, 1.0])).unwrap();
        let r = check_dynamic_relations(&t, &cost, &blind, &u, 1e-9).unwrap();
        assert!(r.inequalities_hold);
        assert!(!r.equality_everywhere);
        assert!(r.stages.iter().any(|s| !s.post_decision.strict_nodes.is_empty()));
    }

    #[test]
    fn builtin_interchange() {
        let inst = InterchangeInstance::builtin();
        let nodewise = interchange_gap(&inst.probs, &inst.nodewise_family(100).unwrap(), 1e-9).unwrap();
        assert_eq!((nodewise.lhs, nodewise.rhs, nodewise.gap), (1.0, 1.0, 0.0));
        assert!(nodewise.witness.is_none());
        let blind = interchange_gap(&inst.probs, &inst.history_blind_family().unwrap(), 1e-9).unwrap();
        assert_eq!((blind.lhs, blind.rhs, blind.gap), (1.0, 5.0, 4.0));
        let w = blind.witness.unwrap();
        assert_eq!((w.minimizer, w.node, w.better_member), (0, 1, 1));
        let single = interchange_gap(&[0.5, 0.5], &[vec![2.0, 3.0]], 1e-9).unwrap();
        assert_eq!(single.lhs, single.rhs);
        assert_eq!(interchange_gap(&[1.0], &[], 1e-9), Err(VerifyError::EmptyFamily));
    }

    #[test]
    fn monotone_interchange() {
        let sum = |_: NodeId, u: &[f64]| u.iter().sum::<f64>();
        let a = vec![vec![1.0, 3.0], vec![2.0, 0.0]];
        let b = vec![vec![2.0, 1.0], vec![0.0, 5.0]];
        let meet: Vec<Decision> = a.iter().zip(&b).map(|(x, y)| componentwise_min(x, y)).collect();
        let probs = [0.25, 0.75];
        match interchange_monotone(&probs, &[a.clone(), b.clone(), meet], sum, 1e-9).unwrap() {
            MonotoneReport::Applicable { report, equal } => {
                assert!(equal);
                assert!((report.lhs - report.rhs).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            interchange_monotone(&probs, &[a.clone(), b.clone()], sum, 1e-9).unwrap(),
            MonotoneReport::Inapplicable { .. }
        ));
        let decreasing = |_: NodeId, u: &[f64]| -u[0];
        let lo = vec![vec![0.0], vec![0.0]];
        let hi = vec![vec![1.0], vec![1.0]];
        assert!(matches!(
            interchange_monotone(&probs, &[lo, hi], decreasing, 1e-9).unwrap(),
            MonotoneReport::Inapplicable { .. }
        ));
    }
}
