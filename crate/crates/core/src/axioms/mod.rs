//! Battery-relative verification of the axioms and properties that
//! characterize risk-sharing rules.
//!
//! Every verdict is relative to a finite battery of pools and permutations:
//! a rule can be shown to violate a property, never proven to satisfy it.

mod battery;
mod checks;
mod classify;
mod theorems;

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{BiMetric, RiskMetric};
use crate::prob::{Permutation, Pool};

pub use battery::{random_pools, Battery, BatteryParams};
pub use checks::{
    check_aggregate, check_full_allocation, check_property, check_reshuffling, check_source_anonymous,
    check_source_anonymous_q_ratio, check_source_anonymous_std, check_strongly_aggregate,
    check_strongly_aggregate_q_ratio, check_strongly_aggregate_std, check_strongly_aggregate_std_unaudited, replay,
};
pub use classify::{
    classify, implication_violations, classified_expected, classified_rules, ClassificationMatrix, ClassificationRow,
    Mismatch, CLASSIFIED_PROPERTIES,
};
pub use theorems::{
    catalog, theorem_harness, CounterexampleRow, HypothesisCheck, TheoremId, TheoremParams, TheoremReport,
    UniquenessRow,
};

/// Comparison tolerance: `|a - b| <= abs + rel * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-9, rel: 1e-9 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        if !(abs.is_finite() && abs >= 0.0 && rel.is_finite() && rel >= 0.0) {
            return Err(Error::InvalidBattery(format!("tolerances must be finite and >= 0 (abs {abs}, rel {rel})")));
        }
        Ok(Self { abs, rel })
    }

    pub fn bound(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    /// `a` and `b` agree, with the relative part taken against the larger of
    /// `scale`, `|a|` and `|b|`.
    pub fn close(&self, a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= self.bound(scale.abs().max(a.abs()).max(b.abs()))
    }

    pub fn is_zero(&self, v: f64, scale: f64) -> bool {
        v.abs() <= self.bound(scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    FullAllocation,
    /// Axiom 1.
    Reshuffling,
    /// Axiom 2.
    SourceAnonymous,
    Aggregate,
    /// Axiom 3.
    StronglyAggregate,
    /// Axiom 4.
    SourceAnonymousQRatio(RiskMetric),
    /// Axiom 5.
    StronglyAggregateQRatio(RiskMetric),
    /// Axiom 6.
    SourceAnonymousStd(RiskMetric, BiMetric),
    /// Axiom 7.
    StronglyAggregateStd(RiskMetric, BiMetric),
}

impl PropertyKind {
    pub fn label(&self) -> String {
        match self {
            PropertyKind::FullAllocation => "full_allocation".into(),
            PropertyKind::Reshuffling => "reshuffling".into(),
            PropertyKind::SourceAnonymous => "source_anonymous".into(),
            PropertyKind::Aggregate => "aggregate".into(),
            PropertyKind::StronglyAggregate => "strongly_aggregate".into(),
            PropertyKind::SourceAnonymousQRatio(q) => format!("source_anonymous_q_ratio[{q}]"),
            PropertyKind::StronglyAggregateQRatio(q) => format!("strongly_aggregate_q_ratio[{q}]"),
            PropertyKind::SourceAnonymousStd(q1, q2) => format!("source_anonymous_std[{q1};{q2}]"),
            PropertyKind::StronglyAggregateStd(q1, q2) => format!("strongly_aggregate_std[{q1};{q2}]"),
        }
    }

    /// Axiom number, for the properties that serve as axioms.
    pub fn axiom(&self) -> Option<u8> {
        match self {
            PropertyKind::Reshuffling => Some(1),
            PropertyKind::SourceAnonymous => Some(2),
            PropertyKind::StronglyAggregate => Some(3),
            PropertyKind::SourceAnonymousQRatio(_) => Some(4),
            PropertyKind::StronglyAggregateQRatio(_) => Some(5),
            PropertyKind::SourceAnonymousStd(..) => Some(6),
            PropertyKind::StronglyAggregateStd(..) => Some(7),
            _ => None,
        }
    }

    /// Parse `reshuffling`, `axiom3`, `q_ratio_sa`, ... with the metrics
    /// used by the parameterized kinds supplied by the caller.
    pub fn parse(name: &str, q: &RiskMetric, q1: &RiskMetric, q2: &BiMetric) -> Result<Self> {
        let kind = match name.trim() {
            "full_allocation" => PropertyKind::FullAllocation,
            "reshuffling" | "axiom1" => PropertyKind::Reshuffling,
            "source_anonymous" | "axiom2" => PropertyKind::SourceAnonymous,
            "aggregate" => PropertyKind::Aggregate,
            "strongly_aggregate" | "axiom3" => PropertyKind::StronglyAggregate,
            "source_anonymous_q_ratio" | "axiom4" => PropertyKind::SourceAnonymousQRatio(q.clone()),
            "strongly_aggregate_q_ratio" | "axiom5" => PropertyKind::StronglyAggregateQRatio(q.clone()),
            "source_anonymous_std" | "axiom6" => PropertyKind::SourceAnonymousStd(q1.clone(), q2.clone()),
            "strongly_aggregate_std" | "axiom7" => PropertyKind::StronglyAggregateStd(q1.clone(), q2.clone()),
            other => return Err(Error::InvalidBattery(format!("unknown property '{other}'"))),
        };
        Ok(kind)
    }

    /// Every kind, parameterized by the given metrics.
    pub fn all(q: &RiskMetric, q1: &RiskMetric, q2: &BiMetric) -> Vec<Self> {
        vec![
            PropertyKind::FullAllocation,
            PropertyKind::Reshuffling,
            PropertyKind::SourceAnonymous,
            PropertyKind::Aggregate,
            PropertyKind::StronglyAggregate,
            PropertyKind::SourceAnonymousQRatio(q.clone()),
            PropertyKind::StronglyAggregateQRatio(q.clone()),
            PropertyKind::SourceAnonymousStd(q1.clone(), q2.clone()),
            PropertyKind::StronglyAggregateStd(q1.clone(), q2.clone()),
        ]
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HoldsOnBattery,
    Violated,
    /// No violation, but the battery offered nothing to compare.
    Inconclusive,
    /// Every pool was degenerate for the rule.
    Skipped,
    /// Metric hypotheses were not confirmed by the audit.
    Refused,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::HoldsOnBattery
    }
}

/// A concrete violation. `pool_index`/`other_pool_index` refer to the
/// battery the check ran on; the pools themselves are embedded so the
/// witness can be replayed without it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub pool_index: usize,
    pub pool: Pool,
    pub permutation: Option<Permutation>,
    pub other_pool_index: Option<usize>,
    pub other_pool: Option<Pool>,
    pub atom: usize,
    pub other_atom: Option<usize>,
    pub participant: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub rule: String,
    pub property: String,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub pools_checked: usize,
    pub pools_skipped: usize,
    /// Individual equalities evaluated.
    pub comparisons: usize,
    /// Matching slots from different pools (strongly aggregate kinds only).
    pub cross_pool_collisions: Option<usize>,
    pub note: Option<String>,
}

/// Which permutations the anonymity and reshuffling checks use.
#[derive(Debug, Clone, PartialEq)]
pub enum PermutationSet {
    /// All `n!` permutations up to `exhaustive_up_to` participants,
    /// otherwise `samples` seeded draws.
    Plan { exhaustive_up_to: usize, samples: usize, seed: u64 },
    /// Caller-supplied permutations; those of the wrong size are ignored.
    Explicit(Vec<Permutation>),
}

impl Default for PermutationSet {
    fn default() -> Self {
        PermutationSet::Plan { exhaustive_up_to: 6, samples: 64, seed: 0 }
    }
}

impl PermutationSet {
    pub fn with_seed(seed: u64) -> Self {
        PermutationSet::Plan { exhaustive_up_to: 6, samples: 64, seed }
    }

    /// Non-identity permutations of `0..n`, in a fixed order.
    pub fn for_size(&self, n: usize) -> Vec<Permutation> {
        match self {
            PermutationSet::Explicit(perms) => {
                perms.iter().filter(|p| p.len() == n && !p.is_identity()).cloned().collect()
            }
            PermutationSet::Plan { exhaustive_up_to, samples, seed } => {
                if n <= *exhaustive_up_to {
                    (0..n)
                        .permutations(n)
                        .map(|m| Permutation::new(m).expect("itertools yields bijections"))
                        .filter(|p| !p.is_identity())
                        .collect()
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    let mut out = Vec::with_capacity(*samples);
                    for k in 0..*samples {
                        let mut m: Vec<usize> = (0..n).collect();
                        if k == 0 {
                            m.swap(0, 1);
                        } else {
                            m.shuffle(&mut rng);
                        }
                        let p = Permutation::new(m).expect("shuffle yields bijections");
                        if !p.is_identity() {
                            out.push(p);
                        }
                    }
                    out
                }
            }
        }
    }

    pub fn is_exhaustive_for(&self, n: usize) -> bool {
        matches!(self, PermutationSet::Plan { exhaustive_up_to, .. } if n <= *exhaustive_up_to)
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" | "1" => Ok(TheoremId::T1),
            "T2" | "2" => Ok(TheoremId::T2),
            "T3" | "3" => Ok(TheoremId::T3),
            "T4" | "4" => Ok(TheoremId::T4),
            "T5" | "5" => Ok(TheoremId::T5),
            "T6" | "6" => Ok(TheoremId::T6),
            other => Err(Error::InvalidBattery(format!("unknown theorem '{other}'"))),
        }
    }
}
