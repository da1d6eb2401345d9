use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{AdditiveCost, CostSpec};
use crate::policy::{ClassKind, Decision, PolicyClass};
use crate::scenario_tree::{Node, ScenarioTree, PROB_SUM_TOL};

use super::DpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("kernel row for state {state} (action {action:?}) {problem}")]
    KernelRow { state: usize, action: Option<usize>, problem: String },
    #[error("cost {value} at (t={stage}, s={state}, a={action}, s'={next}) exceeds bound K = {bound}")]
    Bound { stage: usize, state: usize, action: usize, next: usize, value: f64, bound: f64 },
    #[error("horizon {horizon} needs {horizon} stage cost tables, got {got}")]
    Horizon { horizon: usize, got: usize },
    #[error("value iteration stopped after {iterations} iterations without convergence (last residual {last})")]
    NotConverged { iterations: usize, last: f64, residuals: Vec<f64> },
    #[error("value iteration needs a stationary cost")]
    NotStationary,
    #[error("unrolling needs an action-independent kernel")]
    ActionDependent,
}

/// `P(s' | s)` shared by all actions, or `P_a(s' | s)` per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Kernel {
    Shared(Vec<Vec<f64>>),
    PerAction(Vec<Vec<Vec<f64>>>),
}

/// `c(s, a, s')` for every stage, or `c_{t+1}(s, a, s')` for `t = 0, 1, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostTable {
    Stationary(Vec<Vec<Vec<f64>>>),
    PerStage(Vec<Vec<Vec<Vec<f64>>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Decision>,
    /// Action indices allowed in each state; all actions when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_actions: Option<Vec<Vec<usize>>>,
    pub kernel: Kernel,
    pub cost: CostTable,
    pub gamma: f64,
    #[serde(rename = "bound_K", default, skip_serializing_if = "Option::is_none")]
    pub bound_k: Option<f64>,
    /// Terminal values Ṽ_T; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> MdpError {
    MdpError::Invalid(msg.into())
}

impl MdpSpec {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn allowed(&self, s: usize) -> Vec<usize> {
        match &self.allowed_actions {
            Some(a) => a[s].clone(),
            None => (0..self.actions.len()).collect(),
        }
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        match &self.kernel {
            Kernel::Shared(p) => p[s][next],
            Kernel::PerAction(p) => p[a][s][next],
        }
    }

    /// `c_{t+1}(s, a, s')`.
    pub fn cost(&self, t: usize, s: usize, a: usize, next: usize) -> f64 {
        match &self.cost {
            CostTable::Stationary(c) => c[s][a][next],
            CostTable::PerStage(c) => c[t][s][a][next],
        }
    }

    pub fn stage_tables(&self) -> Option<usize> {
        match &self.cost {
            CostTable::Stationary(_) => None,
            CostTable::PerStage(c) => Some(c.len()),
        }
    }

    fn tables(&self) -> Vec<&Vec<Vec<Vec<f64>>>> {
        match &self.cost {
            CostTable::Stationary(c) => vec![c],
            CostTable::PerStage(c) => c.iter().collect(),
        }
    }

    /// Largest `|c|` over the full table.
    pub fn cost_sup(&self) -> f64 {
        self.tables()
            .iter()
            .flat_map(|c| c.iter().flatten().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// The declared bound, or the observed supremum when none is declared.
    pub fn bound(&self) -> f64 {
        self.bound_k.unwrap_or_else(|| self.cost_sup())
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let (ns, na) = (self.states.len(), self.actions.len());
        if ns == 0 || na == 0 {
            return Err(invalid("states and actions must be nonempty"));
        }
        if !(self.gamma > -1.0 && self.gamma < 1.0) {
            return Err(invalid(format!("discount factor {} outside (-1, 1)", self.gamma)));
        }
        let d = self.states[0].len();
        if self.states.iter().any(|s| s.len() != d) {
            return Err(invalid("states have different dimensions"));
        }
        let m = self.actions[0].len();
        if self.actions.iter().any(|a| a.len() != m) {
            return Err(invalid("actions have different dimensions"));
        }
        if let Some(allowed) = &self.allowed_actions {
            if allowed.len() != ns {
                return Err(invalid("allowed_actions needs one list per state"));
            }
            for (s, list) in allowed.iter().enumerate() {
                if list.is_empty() || list.iter().any(|&a| a >= na) {
                    return Err(invalid(format!("allowed actions of state {s} are empty or out of range")));
                }
            }
        }
        let rows: Vec<(Option<usize>, &Vec<Vec<f64>>)> = match &self.kernel {
            Kernel::Shared(p) => vec![(None, p)],
            Kernel::PerAction(p) => {
                if p.len() != na {
                    return Err(invalid("per-action kernel needs one matrix per action"));
                }
                p.iter().enumerate().map(|(a, m)| (Some(a), m)).collect()
            }
        };
        for (action, matrix) in rows {
            if matrix.len() != ns {
                return Err(invalid("kernel needs one row per state"));
            }
            for (state, row) in matrix.iter().enumerate() {
                let err = |problem: String| MdpError::KernelRow { state, action, problem };
                if row.len() != ns {
                    return Err(err(format!("has {} entries, expected {ns}", row.len())));
                }
                if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(err("has a negative or non-finite entry".into()));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(err(format!("sums to {sum}")));
                }
            }
        }
        for (stage, table) in self.tables().into_iter().enumerate() {
            if table.len() != ns || table.iter().any(|r| r.len() != na || r.iter().any(|c| c.len() != ns)) {
                return Err(invalid("cost table must have shape [state][action][next state]"));
            }
            for (state, by_action) in table.iter().enumerate() {
                for (action, by_next) in by_action.iter().enumerate() {
                    for (next, &value) in by_next.iter().enumerate() {
                        if !value.is_finite() {
                            return Err(invalid(format!("cost at ({stage}, {state}, {action}, {next}) is not finite")));
                        }
                        if let Some(bound) = self.bound_k {
                            if value.abs() > bound {
                                return Err(MdpError::Bound { stage, state, action, next, value, bound });
                            }
                        }
                    }
                }
            }
        }
        if let Some(term) = &self.terminal {
            if term.len() != ns || term.iter().any(|v| !v.is_finite()) {
                return Err(invalid("terminal values need one finite entry per state"));
            }
        }
        Ok(())
    }

    /// Unrolls the chain from `start` into a scenario tree with an additive
    /// lag-1 cost and a nodewise class. Nodes observe the state index and
    /// decisions are action indices; zero-probability transitions are pruned.
    pub fn unroll(&self, start: usize, horizon: usize) -> Result<(ScenarioTree, CostSpec, PolicyClass), DpError> {
        self.validate()?;
        if matches!(self.kernel, Kernel::PerAction(_)) {
            return Err(MdpError::ActionDependent.into());
        }
        if let Some(n) = self.stage_tables() {
            if n < horizon {
                return Err(MdpError::Horizon { horizon, got: n }.into());
            }
        }
        let mut nodes = vec![Node { id: 0, stage: 0, parent: None, cond_prob: 1.0, obs: vec![start as f64] }];
        let mut state_of = vec![start];
        let mut frontier = vec![0usize];
        for t in 1..=horizon {
            let mut next_frontier = Vec::new();
            for &parent in &frontier {
                let s = state_of[parent];
                for next in 0..self.num_states() {
                    let p = self.prob(s, 0, next);
                    if p > 0.0 {
                        let id = nodes.len();
                        nodes.push(Node { id, stage: t, parent: Some(parent), cond_prob: p, obs: vec![next as f64] });
                        state_of.push(next);
                        next_frontier.push(id);
                    }
                }
            }
            frontier = next_frontier;
        }
        let tree = ScenarioTree::new(horizon, 1, nodes)?;
        let mdp = self.clone();
        let terminal = self.terminal.clone();
        let gamma = self.gamma;
        let cost = AdditiveCost::new(gamma, 1, move |t: usize, xs: &[&[f64]], us: &[&[f64]]| {
            let (s, next, a) = (xs[0][0] as usize, xs[1][0] as usize, us[0][0] as usize);
            let mut c = mdp.cost(t - 1, s, a, next);
            if t == horizon {
                if let Some(term) = &terminal {
                    c += gamma * term[next];
                }
            }
            c
        })?;
        let feasible = state_of
            .iter()
            .map(|&s| self.allowed(s).into_iter().map(|a| vec![a as f64]).collect())
            .collect();
        let cls = PolicyClass::new(&tree, ClassKind::Nodewise, 1, feasible)?;
        Ok((tree, CostSpec::additive(cost), cls))
    }
}

/// `(T̂V)(s) = min_a Σ_{s'} P_a(s'|s) [c_{t+1}(s, a, s') + γ V(s')]` with the
/// first minimizing action; states are processed in parallel, each with a
/// fixed summation order.
pub fn bellman_operator(mdp: &MdpSpec, t: usize, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let ns = mdp.num_states();
    (0..ns)
        .into_par_iter()
        .map(|s| {
            let mut best = (f64::INFINITY, usize::MAX);
            for a in mdp.allowed(s) {
                let mut q = 0.0;
                for (next, &vn) in v.iter().enumerate() {
                    let p = mdp.prob(s, a, next);
                    if p != 0.0 {
                        q += p * (mdp.cost(t, s, a, next) + mdp.gamma * vn);
                    }
                }
                if q < best.0 {
                    best = (q, a);
                }
            }
            best
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizon {
    /// Ṽ_t for `t = 0..=T`.
    pub values: Vec<Vec<f64>>,
    /// First minimizing action per state for `t = 0..T`.
    pub policy: Vec<Vec<usize>>,
}

/// Backward induction from the terminal values over `horizon` stages.
pub fn mdp_backward_induction(mdp: &MdpSpec, horizon: usize) -> Result<FiniteHorizon, MdpError> {
    mdp.validate()?;
    if let Some(n) = mdp.stage_tables() {
        if n < horizon {
            return Err(MdpError::Horizon { horizon, got: n });
        }
    }
    let last = mdp.terminal.clone().unwrap_or_else(|| vec![0.0; mdp.num_states()]);
    let mut values = vec![last];
    let mut policy = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (v, a) = bellman_operator(mdp, t, values.last().expect("nonempty"));
        values.push(v);
        policy.push(a);
    }
    values.reverse();
    policy.reverse();
    Ok(FiniteHorizon { values, policy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// `‖T̂V_k - V_k‖∞` for every iteration.
    pub residuals: Vec<f64>,
    /// Consecutive residual ratios; zero residuals end the list.
    pub ratios: Vec<f64>,
    pub threshold: f64,
}

/// Iterates the Bellman operator from `V ≡ 0` until the residual drops to
/// `ε(1-|γ|)/(2|γ|)`, which bounds the distance of the result to the fixed
/// point by `ε`. With `γ = 0` one step is exact.
pub fn value_iteration(mdp: &MdpSpec, epsilon: f64, max_iters: usize) -> Result<ValueIteration, MdpError> {
    mdp.validate()?;
    if mdp.stage_tables().is_some() {
        return Err(MdpError::NotStationary);
    }
    let g = mdp.gamma.abs();
    let threshold = if g == 0.0 { f64::INFINITY } else { epsilon * (1.0 - g) / (2.0 * g) };
    let mut v = vec![0.0; mdp.num_states()];
    let mut residuals = Vec::new();
    for k in 1..=max_iters {
        let (next, policy) = bellman_operator(mdp, 0, &v);
        let r = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        residuals.push(r);
        v = next;
        if r <= threshold {
            let ratios = residuals
                .windows(2)
                .take_while(|w| w[0] > 0.0)
                .map(|w| w[1] / w[0])
                .collect();
            return Ok(ValueIteration { values: v, policy, iterations: k, residuals, ratios, threshold });
        }
    }
    Err(MdpError::NotConverged { iterations: max_iters, last: residuals.last().copied().unwrap_or(f64::NAN), residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_cost(gamma: f64) -> MdpSpec {
        MdpSpec {
            states: vec![vec![0.0], vec![1.0]],
            actions: vec![vec![0.0], vec![1.0]],
            allowed_actions: None,
            kernel: Kernel::Shared(vec![vec![0.3, 0.7], vec![0.9, 0.1]]),
            cost: CostTable::Stationary(vec![vec![vec![1.0; 2]; 2]; 2]),
            gamma,
            bound_k: Some(1.0),
            terminal: None,
        }
    }

    #[test]
    fn geometric_partial_sums() {
        let mdp = constant_cost(0.5);
        let fh = mdp_backward_induction(&mdp, 3).unwrap();
        assert_eq!(fh.values[0], vec![1.75, 1.75]);
        assert_eq!(fh.values[3], vec![0.0, 0.0]);
        let vi = value_iteration(&mdp, 1e-8, 1000).unwrap();
        assert!(vi.values.iter().all(|v| (v - 2.0).abs() <= 1e-8));
        // once residuals near 1e-9 the ratio carries rounding noise of order
        // ulp(V) / residual, so ratios are checked on a coarser run
        let vi = value_iteration(&mdp, 1e-4, 1000).unwrap();
        assert!(vi.ratios.iter().all(|&r| r <= 0.5 + 1e-9), "{:?}", vi.ratios);
    }

    #[test]
    fn zero_discount_stops_after_one_step() {
        let mut mdp = constant_cost(0.0);
        mdp.cost = CostTable::Stationary(vec![vec![vec![2.0, 4.0], vec![1.0, 3.0]], vec![vec![5.0, 0.0], vec![1.0, 1.0]]]);
        mdp.bound_k = None;
        let vi = value_iteration(&mdp, 1e-8, 10).unwrap();
        assert_eq!(vi.iterations, 1);
        // state 0: a0 → 0.3·2 + 0.7·4 = 3.4, a1 → 0.3 + 2.1 = 2.4
        assert!((vi.values[0] - 2.4).abs() < 1e-15);
        assert_eq!(vi.policy, vec![1, 1]);
    }

    #[test]
    fn validation_errors() {
        let mut mdp = constant_cost(0.5);
        mdp.kernel = Kernel::Shared(vec![vec![0.5, 0.6], vec![1.0, 0.0]]);
        assert!(matches!(mdp.validate(), Err(MdpError::KernelRow { state: 0, .. })));
        let mut mdp = constant_cost(0.5);
        mdp.bound_k = Some(0.5);
        assert!(matches!(mdp.validate(), Err(MdpError::Bound { .. })));
        let mut mdp = constant_cost(1.0);
        mdp.bound_k = None;
        assert!(mdp.validate().is_err());
        let mdp = constant_cost(0.99);
        assert!(matches!(value_iteration(&mdp, 1e-12, 5), Err(MdpError::NotConverged { iterations: 5, .. })));
    }

    #[test]
    fn json_shapes() {
        let json = r#"{"states": [[0], [1]], "actions": [[0]], "kernel": [[[1, 0], [0, 1]]],
            "cost": [[[1, 2]], [[3, 4]]], "gamma": 0.5, "bound_K": 4}"#;
        let mdp: MdpSpec = serde_json::from_str(json).unwrap();
        assert!(matches!(mdp.kernel, Kernel::PerAction(_)));
        assert!(matches!(mdp.cost, CostTable::Stationary(_)));
        mdp.validate().unwrap();
        assert_eq!(mdp.bound(), 4.0);
    }
}
