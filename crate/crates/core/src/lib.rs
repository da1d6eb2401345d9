//! Multistage stochastic optimization on finite scenario trees.

pub mod bundle;
pub mod cost;
pub mod dp_solvers;
pub mod generate;
pub mod policy;
pub mod scenario_tree;
pub mod value_process;
pub mod verification;
