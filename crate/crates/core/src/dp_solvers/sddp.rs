use serde::{Deserialize, Serialize};

use crate::cost::{AdditiveCost, CostJson, CostSpec, FunctionJson};
use crate::policy::{ClassKind, Decision, PolicyClass};
use crate::scenario_tree::{ScenarioTree, PROB_SUM_TOL};

use super::mdp::{CostTable, Kernel, MdpSpec};
use super::DpError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseAtom {
    pub prob: f64,
    pub value: Vec<f64>,
}

/// Stagewise-independent problem: `X_{t+1}` has law `stages[t]` whatever the
/// past, the state is the last observation and the cost of stage `t + 1` is a
/// lag-1 stage cost `c_{t+1}(x_t, x_{t+1}, u_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagewiseProblem {
    pub x0: Vec<f64>,
    pub gamma: f64,
    /// Decision grid, the same at every stage.
    pub decisions: Vec<Decision>,
    pub stages: Vec<Vec<NoiseAtom>>,
    /// One stage cost for every stage, or one per stage.
    pub stage_costs: Vec<FunctionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagewiseSolution {
    /// States of stage `t`: `x0` at `t = 0`, the atoms of `X_t` afterwards.
    pub states: Vec<Vec<Vec<f64>>>,
    /// Ṽ_t on the states of stage `t`, for `t = 0..=T` (Ṽ_T = 0).
    pub values: Vec<Vec<f64>>,
    /// First minimizing decision index per state, `t = 0..T`.
    pub policy: Vec<Vec<usize>>,
}

impl StagewiseSolution {
    pub fn root_value(&self) -> f64 {
        self.values[0][0]
    }
}

impl StagewiseProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self) -> Result<(), DpError> {
        let err = |m: String| DpError::Stagewise(m);
        if self.decisions.is_empty() {
            return Err(err("decision grid is empty".into()));
        }
        for (t, atoms) in self.stages.iter().enumerate() {
            if atoms.is_empty() {
                return Err(err(format!("stage {} has no atoms", t + 1)));
            }
            if atoms.iter().any(|a| a.prob.is_nan() || a.prob < 0.0 || a.value.len() != self.x0.len() || a.value.iter().any(|v| !v.is_finite())) {
                return Err(err(format!("stage {} has an invalid atom", t + 1)));
            }
            let sum: f64 = atoms.iter().map(|a| a.prob).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(err(format!("stage {} probabilities sum to {sum}", t + 1)));
            }
        }
        if self.stage_costs.len() != 1 && self.stage_costs.len() != self.horizon() {
            return Err(err(format!("expected 1 or {} stage costs, got {}", self.horizon(), self.stage_costs.len())));
        }
        Ok(())
    }

    /// The additive lag-1 cost.
    pub fn cost(&self) -> Result<CostSpec, DpError> {
        Ok(CostSpec::from_json(CostJson::additive(self.gamma, 1, self.stage_costs.clone()))?)
    }

    fn additive(&self) -> Result<AdditiveCost, DpError> {
        Ok(self.cost()?.as_additive().expect("additive form").clone())
    }

    /// `c_{t+1}(x, y, u)`.
    fn stage_cost(add: &AdditiveCost, t: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
        let mut xs = vec![x; t + 1];
        xs.push(y);
        let us = vec![u; t + 1];
        add.stage(t + 1, &xs, &us)
    }

    /// The product scenario tree, additive cost and nodewise class of the
    /// same problem.
    pub fn to_tree(&self) -> Result<(ScenarioTree, CostSpec, PolicyClass), DpError> {
        self.validate()?;
        let stages: Vec<Vec<(f64, Vec<f64>)>> = self
            .stages
            .iter()
            .map(|atoms| atoms.iter().map(|a| (a.prob, a.value.clone())).collect())
            .collect();
        let tree = ScenarioTree::product(self.x0.clone(), &stages)?;
        let cls = PolicyClass::uniform(&tree, ClassKind::Nodewise, self.decisions.clone())?;
        Ok((tree, self.cost()?, cls))
    }

    /// An MDP on time-stamped states `(t, atom)` with per-stage cost tables;
    /// state 0 is `x0` and the last stage's states are absorbing.
    pub fn to_mdp(&self) -> Result<MdpSpec, DpError> {
        self.validate()?;
        let add = self.additive()?;
        let horizon = self.horizon();
        let mut states = vec![self.x0.clone()];
        let mut offsets = vec![0usize];
        for atoms in &self.stages {
            offsets.push(states.len());
            states.extend(atoms.iter().map(|a| a.value.clone()));
        }
        let ns = states.len();
        let stage_of = |s: usize| offsets.iter().rposition(|&o| o <= s).expect("offset 0");
        let mut kernel = vec![vec![0.0; ns]; ns];
        for (s, row) in kernel.iter_mut().enumerate() {
            let t = stage_of(s);
            if t < horizon {
                for (i, atom) in self.stages[t].iter().enumerate() {
                    row[offsets[t + 1] + i] += atom.prob;
                }
            } else {
                row[s] = 1.0;
            }
        }
        let na = self.decisions.len();
        let mut cost = vec![vec![vec![vec![0.0; ns]; na]; ns]; horizon];
        let mut sup = 0.0f64;
        for (t, table) in cost.iter_mut().enumerate() {
            for s in offsets[t]..offsets[t + 1] {
                for (a, u) in self.decisions.iter().enumerate() {
                    for (i, atom) in self.stages[t].iter().enumerate() {
                        let c = Self::stage_cost(&add, t, &states[s], &atom.value, u);
                        sup = sup.max(c.abs());
                        table[s][a][offsets[t + 1] + i] = c;
                    }
                }
            }
        }
        Ok(MdpSpec {
            states,
            actions: self.decisions.clone(),
            allowed_actions: None,
            kernel: Kernel::Shared(kernel),
            cost: CostTable::PerStage(cost),
            gamma: self.gamma,
            bound_k: Some(sup),
            terminal: None,
        })
    }

    /// A stationary MDP on `x0` and the atoms, available when every stage has
    /// the same law and one stage cost applies throughout.
    pub fn to_stationary_mdp(&self) -> Result<MdpSpec, DpError> {
        self.validate()?;
        if self.stage_costs.len() != 1 || self.stages.windows(2).any(|w| w[0] != w[1]) || self.stages.is_empty() {
            return Err(DpError::Stagewise("stages differ, no stationary form".into()));
        }
        let add = self.additive()?;
        let atoms = &self.stages[0];
        let mut states = vec![self.x0.clone()];
        states.extend(atoms.iter().map(|a| a.value.clone()));
        let ns = states.len();
        let row: Vec<f64> = std::iter::once(0.0).chain(atoms.iter().map(|a| a.prob)).collect();
        let kernel = vec![row; ns];
        let mut sup = 0.0f64;
        let cost = states
            .iter()
            .map(|x| {
                self.decisions
                    .iter()
                    .map(|u| {
                        std::iter::once(0.0)
                            .chain(atoms.iter().map(|a| {
                                let c = Self::stage_cost(&add, 0, x, &a.value, u);
                                sup = sup.max(c.abs());
                                c
                            }))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(MdpSpec {
            states,
            actions: self.decisions.clone(),
            allowed_actions: None,
            kernel: Kernel::Shared(kernel),
            cost: CostTable::Stationary(cost),
            gamma: self.gamma,
            bound_k: Some(sup),
            terminal: None,
        })
    }
}

/// `Ṽ_t(x_t) = min_u Σ_atoms p [c_{t+1}(x_t, X_{t+1}, u) + γ Ṽ_{t+1}(X_{t+1})]`
/// backwards from `Ṽ_T = 0`; the expectation does not depend on `x_t`.
pub fn sddp_recursion(problem: &StagewiseProblem) -> Result<StagewiseSolution, DpError> {
    problem.validate()?;
    let add = problem.additive()?;
    let horizon = problem.horizon();
    let mut states = vec![vec![problem.x0.clone()]];
    states.extend(problem.stages.iter().map(|atoms| atoms.iter().map(|a| a.value.clone()).collect()));
    let mut values = vec![Vec::new(); horizon + 1];
    let mut policy = vec![Vec::new(); horizon];
    values[horizon] = vec![0.0; states[horizon].len()];
    for t in (0..horizon).rev() {
        let atoms = &problem.stages[t];
        let (v, a): (Vec<f64>, Vec<usize>) = states[t]
            .iter()
            .map(|x| {
                let mut best = (f64::INFINITY, 0);
                for (k, u) in problem.decisions.iter().enumerate() {
                    let q: f64 = atoms
                        .iter()
                        .zip(&values[t + 1])
                        .map(|(atom, &next)| {
                            atom.prob * (StagewiseProblem::stage_cost(&add, t, x, &atom.value, u) + problem.gamma * next)
                        })
                        .sum();
                    if q < best.0 {
                        best = (q, k);
                    }
                }
                best
            })
            .unzip();
        values[t] = v;
        policy[t] = a;
    }
    Ok(StagewiseSolution { states, values, policy })
}
