//! Finite-scenario risk sharing: pools of losses, contribution rules and
//! battery-based verification of the axioms that characterize them.

pub mod axioms;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod prob;
pub mod rules;

pub use error::{Error, Result};
pub use metrics::{BiMetric, RiskMetric};
pub use prob::{ContributionMatrix, Permutation, Pool, ProbSpace, RandomVariable};
pub use rules::{DegeneratePolicy, RuleKind, RuleSpec};
