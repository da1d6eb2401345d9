//! Problem files: a tree, a cost and a class, plus optional candidate
//! policies and a recorded optimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, CostJson, CostSpec};
use crate::generate::Instance;
use crate::policy::{ClassFile, Policy, PolicyClass, PolicyError};
use crate::scenario_tree::{ScenarioTree, Violation};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("invalid scenario tree: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Tree(Vec<Violation>),
    #[error("class: {0}")]
    Class(#[from] PolicyError),
    #[error("cost: {0}")]
    Cost(#[from] CostError),
    #[error("candidate policy {index}: {source}")]
    Candidate { index: usize, source: PolicyError },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemBundle {
    pub tree: ScenarioTree,
    pub cost: CostJson,
    pub class: ClassFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_optimum: Option<f64>,
}

/// A bundle with every cross-reference checked.
#[derive(Clone, Debug)]
pub struct Problem {
    pub tree: ScenarioTree,
    pub cost: CostSpec,
    pub class: PolicyClass,
    pub policies: Vec<Policy>,
    pub expected_optimum: Option<f64>,
}

impl ProblemBundle {
    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_instance(inst: &Instance) -> Self {
        Self {
            tree: inst.tree.clone(),
            cost: inst.cost_json.clone(),
            class: inst.class.to_file(),
            policies: Vec::new(),
            expected_optimum: None,
        }
    }

    pub fn resolve(&self) -> Result<Problem, BundleError> {
        let violations = self.tree.validate();
        if !violations.is_empty() {
            return Err(BundleError::Tree(violations));
        }
        let class = self.class.resolve(&self.tree)?;
        let cost = CostSpec::from_json(self.cost.clone())?;
        for (index, p) in self.policies.iter().enumerate() {
            p.check_tree(&self.tree).map_err(|source| BundleError::Candidate { index, source })?;
            if p.decision_dim() != class.decision_dim() {
                return Err(BundleError::Candidate {
                    index,
                    source: PolicyError::Dimension { node: 0, got: p.decision_dim(), expected: class.decision_dim() },
                });
            }
        }
        Ok(Problem {
            tree: self.tree.clone(),
            cost,
            class,
            policies: self.policies.clone(),
            expected_optimum: self.expected_optimum,
        })
    }
}
