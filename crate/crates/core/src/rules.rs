//! Risk-sharing rules: pure maps from a [`Pool`] to a [`ContributionMatrix`]
//! whose columns sum to the pool's aggregate loss.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{BiMetric, RiskMetric};
use crate::prob::{level_sets, stable_sum, ContributionMatrix, Pool, ProbSpace};

/// Relative size below which a denominator built from cancelling terms is
/// treated as zero.
const CANCELLATION_TOL: f64 = 1e-12;

/// Tolerance on equality of metric values in the hybrid rule.
const HYBRID_EQ_TOL: f64 = 1e-12;

/// What a rule does when its defining denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    #[default]
    Error,
    /// Read every share (or linear fraction) as `1/n`.
    UniformFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    Uniform,
    QProportional(RiskMetric),
    /// Proportional to `w_i q[X_i]` with weights attached to seats.
    WeightedQProportional { q: RiskMetric, weights: Vec<f64> },
    LinearQ1Q2 { q1: RiskMetric, q2: BiMetric },
    ScenarioProportional { typical: usize },
    ScenarioLinear { typical: usize, high: usize, low: usize },
    CovarianceLinear,
    VarianceLinear,
    ConditionalMean,
    OrderStatistics,
    AllInOne,
    StandAlone,
    /// Order statistics when all `q[X_i]` coincide, `q`-proportional otherwise.
    Hybrid(RiskMetric),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSpec {
    pub kind: RuleKind,
    pub degenerate: DegeneratePolicy,
}

impl RuleSpec {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            degenerate: DegeneratePolicy::Error,
        }
    }

    pub fn with_policy(mut self, policy: DegeneratePolicy) -> Self {
        self.degenerate = policy;
        self
    }

    pub fn uniform() -> Self {
        Self::new(RuleKind::Uniform)
    }

    pub fn mean_proportional() -> Self {
        Self::new(RuleKind::QProportional(RiskMetric::Mean))
    }

    pub fn q_proportional(q: RiskMetric) -> Self {
        Self::new(RuleKind::QProportional(q))
    }

    pub fn linear(q1: RiskMetric, q2: BiMetric) -> Self {
        Self::new(RuleKind::LinearQ1Q2 { q1, q2 })
    }

    /// Stable identifier used in reports.
    pub fn id(&self) -> String {
        match &self.kind {
            RuleKind::Uniform => "uniform".into(),
            RuleKind::QProportional(RiskMetric::Mean) => "mean_proportional".into(),
            RuleKind::QProportional(q) => format!("q_proportional[{q}]"),
            RuleKind::WeightedQProportional { q, weights } => {
                let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
                format!("weighted_q_proportional[{q};{}]", w.join(","))
            }
            RuleKind::LinearQ1Q2 { q1, q2 } => format!("q1q2_linear[{q1};{q2}]"),
            RuleKind::ScenarioProportional { typical } => format!("scenario_proportional[{typical}]"),
            RuleKind::ScenarioLinear { typical, high, low } => {
                format!("scenario_linear[{typical},{high},{low}]")
            }
            RuleKind::CovarianceLinear => "covariance_linear".into(),
            RuleKind::VarianceLinear => "variance_linear".into(),
            RuleKind::ConditionalMean => "conditional_mean".into(),
            RuleKind::OrderStatistics => "order_statistics".into(),
            RuleKind::AllInOne => "all_in_one".into(),
            RuleKind::StandAlone => "stand_alone".into(),
            RuleKind::Hybrid(q) => format!("hybrid[{q}]"),
        }
    }

    /// Check parameters against a pool shape without evaluating the rule.
    pub fn validate(&self, participants: usize, atoms: usize) -> Result<()> {
        let atom = |k: usize| {
            if k < atoms {
                Ok(())
            } else {
                Err(Error::ScenarioOutOfRange { index: k, atoms })
            }
        };
        match &self.kind {
            RuleKind::QProportional(q) | RuleKind::Hybrid(q) => q.validate(atoms),
            RuleKind::WeightedQProportional { q, weights } => {
                q.validate(atoms)?;
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidRule(format!("weight {w} is not > 0")));
                }
                if weights.len() < participants {
                    return Err(Error::InvalidRule(format!(
                        "{} seat weights for {participants} participants",
                        weights.len()
                    )));
                }
                Ok(())
            }
            RuleKind::LinearQ1Q2 { q1, q2 } => {
                q1.validate(atoms)?;
                q2.validate(atoms)
            }
            RuleKind::ScenarioProportional { typical } => atom(*typical),
            RuleKind::ScenarioLinear { typical, high, low } => {
                atom(*typical)?;
                atom(*high)?;
                atom(*low)
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, pool: &Pool) -> Result<ContributionMatrix> {
        apply(self, pool)
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

pub fn apply(rule: &RuleSpec, pool: &Pool) -> Result<ContributionMatrix> {
    rule.validate(pool.participants(), pool.atoms())?;
    let s = pool.aggregate_values();
    let n = pool.participants();
    let policy = rule.degenerate;
    let id = || rule.id();

    let rows = match &rule.kind {
        RuleKind::Uniform => vec![s.iter().map(|v| v / n as f64).collect(); n],
        RuleKind::QProportional(q) => {
            proportional(&q.eval_pool(pool)?, &s, policy, id, || format!("sum of {q} is 0"))?
        }
        RuleKind::WeightedQProportional { q, weights } => {
            let scores: Vec<f64> = q
                .eval_pool(pool)?
                .iter()
                .zip(weights)
                .map(|(v, w)| w * v)
                .collect();
            proportional(&scores, &s, policy, id, || format!("weighted sum of {q} is 0"))?
        }
        RuleKind::ScenarioProportional { typical } => {
            let scores: Vec<f64> = (0..n).map(|i| pool.row(i)[*typical]).collect();
            proportional(&scores, &s, policy, id, || format!("S(omega_{typical})=0"))?
        }
        RuleKind::LinearQ1Q2 { q1, q2 } => {
            let base = q1.eval_pool(pool)?;
            let scale = q2.eval_pool(pool, &s)?;
            linear(&base, &scale, &s, policy, id, || format!("sum of {q2}[X_k,S] is 0"))?
        }
        RuleKind::CovarianceLinear => {
            let base = RiskMetric::Mean.eval_pool(pool)?;
            let scale = BiMetric::Covariance.eval_pool(pool, &s)?;
            linear(&base, &scale, &s, policy, id, || "var(S)=0".into())?
        }
        RuleKind::VarianceLinear => {
            let base = RiskMetric::Mean.eval_pool(pool)?;
            let scale = BiMetric::FirstVariance.eval_pool(pool, &s)?;
            linear(&base, &scale, &s, policy, id, || "var(X_k)=0 for every k".into())?
        }
        RuleKind::ScenarioLinear { typical, high, low } => {
            scenario_linear(pool, &s, (*typical, *high, *low), policy, id)?
        }
        RuleKind::ConditionalMean => conditional_mean(pool, &s),
        RuleKind::OrderStatistics => order_statistics(pool),
        RuleKind::AllInOne => {
            let mut rows = vec![vec![0.0; pool.atoms()]; n];
            rows[0] = s.clone();
            rows
        }
        RuleKind::StandAlone => pool.losses().to_vec(),
        RuleKind::Hybrid(q) => {
            let scores = q.eval_pool(pool)?;
            if all_equal(&scores) {
                order_statistics(pool)
            } else {
                proportional(&scores, &s, policy, id, || format!("sum of {q} is 0"))?
            }
        }
    };
    Ok(ContributionMatrix::new(rows))
}

/// The piecewise rule used to show that axiom 1 does not follow from
/// source-anonymous contribution-over-`q` ratios.
pub fn apply_hybrid_counterexample(q: &RiskMetric, pool: &Pool) -> Result<ContributionMatrix> {
    apply(&RuleSpec::new(RuleKind::Hybrid(q.clone())), pool)
}

/// Expected contribution of every participant.
pub fn expected_contributions(cm: &ContributionMatrix, space: &ProbSpace) -> Vec<f64> {
    cm.rows().iter().map(|row| space.expectation(row)).collect()
}

fn is_vanishing(denominator: f64, terms: &[f64]) -> bool {
    let mass: f64 = terms.iter().map(|t| t.abs()).sum();
    denominator == 0.0 || denominator.abs() <= CANCELLATION_TOL * mass
}

fn degenerate(
    policy: DegeneratePolicy,
    id: impl Fn() -> String,
    condition: impl Fn() -> String,
) -> Result<()> {
    match policy {
        DegeneratePolicy::Error => Err(Error::DegeneratePool {
            rule: id(),
            condition: condition(),
        }),
        DegeneratePolicy::UniformFallback => Ok(()),
    }
}

/// `C_i = scores_i / sum_k scores_k * S`.
fn proportional(
    scores: &[f64],
    s: &[f64],
    policy: DegeneratePolicy,
    id: impl Fn() -> String,
    condition: impl Fn() -> String,
) -> Result<Vec<Vec<f64>>> {
    let n = scores.len();
    let total = stable_sum(scores.iter().copied());
    let shares: Vec<f64> = if is_vanishing(total, scores) {
        degenerate(policy, id, condition)?;
        vec![1.0 / n as f64; n]
    } else {
        scores.iter().map(|v| v / total).collect()
    };
    Ok(shares
        .iter()
        .map(|share| s.iter().map(|v| share * v).collect())
        .collect())
}

/// `C_i = base_i + scale_i / sum_k scale_k * (S - sum_k base_k)`.
fn linear(
    base: &[f64],
    scale: &[f64],
    s: &[f64],
    policy: DegeneratePolicy,
    id: impl Fn() -> String,
    condition: impl Fn() -> String,
) -> Result<Vec<Vec<f64>>> {
    let n = base.len();
    let total_scale = stable_sum(scale.iter().copied());
    let fractions: Vec<f64> = if is_vanishing(total_scale, scale) {
        degenerate(policy, id, condition)?;
        vec![1.0 / n as f64; n]
    } else {
        scale.iter().map(|v| v / total_scale).collect()
    };
    let total_base = stable_sum(base.iter().copied());
    Ok(base
        .iter()
        .zip(&fractions)
        .map(|(b, f)| s.iter().map(|v| b + f * (v - total_base)).collect())
        .collect())
}

fn scenario_linear(
    pool: &Pool,
    s: &[f64],
    (typical, high, low): (usize, usize, usize),
    policy: DegeneratePolicy,
    id: impl Fn() -> String,
) -> Result<Vec<Vec<f64>>> {
    let n = pool.participants();
    let spread = s[high] - s[low];
    let fractions: Vec<f64> = if spread == 0.0 {
        degenerate(policy, id, || format!("S(omega_{high})=S(omega_{low})"))?;
        vec![1.0 / n as f64; n]
    } else {
        (0..n)
            .map(|i| (pool.row(i)[high] - pool.row(i)[low]) / spread)
            .collect()
    };
    Ok((0..n)
        .map(|i| {
            let b = pool.row(i)[typical];
            s.iter().map(|v| b + fractions[i] * (v - s[typical])).collect()
        })
        .collect())
}

/// `E[X_i | S]`: constant on each level set of `S`.
fn conditional_mean(pool: &Pool, s: &[f64]) -> Vec<Vec<f64>> {
    let weights = pool.space().weights();
    let mut rows = pool.losses().to_vec();
    for group in level_sets(s) {
        if group.len() < 2 {
            continue;
        }
        let mass: f64 = group.iter().map(|&j| weights[j]).sum();
        for row in rows.iter_mut() {
            let mean = group.iter().map(|&j| weights[j] * row[j]).sum::<f64>() / mass;
            for &j in &group {
                row[j] = mean;
            }
        }
    }
    rows
}

fn order_statistics(pool: &Pool) -> Vec<Vec<f64>> {
    let n = pool.participants();
    let mut rows = vec![vec![0.0; pool.atoms()]; n];
    for j in 0..pool.atoms() {
        let mut column: Vec<f64> = pool.losses().iter().map(|r| r[j]).collect();
        column.sort_by(f64::total_cmp);
        for (i, v) in column.into_iter().enumerate() {
            rows[i][j] = v;
        }
    }
    rows
}

fn all_equal(values: &[f64]) -> bool {
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    values
        .windows(2)
        .all(|w| (w[0] - w[1]).abs() <= HYBRID_EQ_TOL * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_a() -> Pool {
        Pool::from_parts(
            vec![0.5, 0.25, 0.25],
            vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]],
        )
        .unwrap()
    }

    fn pool_sym() -> Pool {
        Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap()
    }

    fn assert_rows(cm: &ContributionMatrix, expected: &[&[f64]]) {
        assert_eq!(cm.participants(), expected.len());
        for (row, want) in cm.rows().iter().zip(expected) {
            for (a, b) in row.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", cm.rows(), expected);
            }
        }
    }

    #[test]
    fn uniform_example() {
        let cm = RuleSpec::uniform().apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[1.0, 3.0, 5.0], &[1.0, 3.0, 5.0]]);
    }

    #[test]
    fn mean_proportional_example() {
        let cm = RuleSpec::mean_proportional().apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[1.2, 3.6, 6.0], &[0.8, 2.4, 4.0]]);
    }

    #[test]
    fn covariance_linear_example() {
        let cm = RuleSpec::new(RuleKind::CovarianceLinear).apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[0.0, 4.0, 8.0], &[2.0, 2.0, 2.0]]);
    }

    #[test]
    fn covariance_linear_degenerate_when_aggregate_is_constant() {
        let err = RuleSpec::new(RuleKind::CovarianceLinear).apply(&pool_sym()).unwrap_err();
        assert_eq!(
            err,
            Error::DegeneratePool {
                rule: "covariance_linear".into(),
                condition: "var(S)=0".into()
            }
        );
        let cm = RuleSpec::new(RuleKind::CovarianceLinear)
            .with_policy(DegeneratePolicy::UniformFallback)
            .apply(&pool_sym())
            .unwrap();
        // E[X_i] + (S - E[S]) / n with S constant
        assert_rows(&cm, &[&[2.0, 2.0], &[2.0, 2.0]]);
    }

    #[test]
    fn zero_pool_under_fallback_gives_zero() {
        let zero = Pool::from_parts(vec![0.5, 0.5], vec![vec![0.0; 2]; 3]).unwrap();
        assert!(matches!(
            RuleSpec::mean_proportional().apply(&zero),
            Err(Error::DegeneratePool { .. })
        ));
        let cm = RuleSpec::mean_proportional()
            .with_policy(DegeneratePolicy::UniformFallback)
            .apply(&zero)
            .unwrap();
        assert!(cm.rows().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn variance_linear_degenerate_when_all_rows_constant() {
        let flat = Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(RuleSpec::new(RuleKind::VarianceLinear).apply(&flat).is_err());
    }

    #[test]
    fn scenario_rules() {
        let prop = RuleSpec::new(RuleKind::ScenarioProportional { typical: 0 });
        let cm = prop.apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[0.0, 0.0, 0.0], &[2.0, 6.0, 10.0]]);

        let lin = RuleSpec::new(RuleKind::ScenarioLinear { typical: 0, high: 2, low: 1 });
        let cm = lin.apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[0.0, 4.0, 8.0], &[2.0, 2.0, 2.0]]);

        let flat_spread = RuleSpec::new(RuleKind::ScenarioLinear { typical: 0, high: 1, low: 0 });
        assert!(flat_spread.apply(&pool_sym()).is_err());

        let bad = RuleSpec::new(RuleKind::ScenarioProportional { typical: 3 });
        assert_eq!(
            bad.apply(&pool_a()).unwrap_err(),
            Error::ScenarioOutOfRange { index: 3, atoms: 3 }
        );
    }

    #[test]
    fn conditional_mean_groups_tied_aggregates() {
        let cm = RuleSpec::new(RuleKind::ConditionalMean).apply(&pool_sym()).unwrap();
        assert_rows(&cm, &[&[2.0, 2.0], &[2.0, 2.0]]);
        let distinct = RuleSpec::new(RuleKind::ConditionalMean).apply(&pool_a()).unwrap();
        assert_eq!(distinct.rows(), pool_a().losses());
    }

    #[test]
    fn order_statistics_and_simple_rules() {
        let cm = RuleSpec::new(RuleKind::OrderStatistics).apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[0.0, 2.0, 2.0], &[2.0, 4.0, 8.0]]);
        let cm = RuleSpec::new(RuleKind::AllInOne).apply(&pool_a()).unwrap();
        assert_rows(&cm, &[&[2.0, 6.0, 10.0], &[0.0, 0.0, 0.0]]);
        let cm = RuleSpec::new(RuleKind::StandAlone).apply(&pool_a()).unwrap();
        assert_eq!(cm.rows(), pool_a().losses());
    }

    #[test]
    fn hybrid_examples() {
        let cm = apply_hybrid_counterexample(&RiskMetric::Mean, &pool_sym()).unwrap();
        assert_rows(&cm, &[&[1.0, 1.0], &[3.0, 3.0]]);
        let cm = apply_hybrid_counterexample(&RiskMetric::Mean, &pool_a()).unwrap();
        assert_rows(&cm, &[&[1.2, 3.6, 6.0], &[0.8, 2.4, 4.0]]);
        let cm = apply_hybrid_counterexample(&RiskMetric::Constant(1.0), &pool_a()).unwrap();
        assert_rows(&cm, &[&[0.0, 2.0, 2.0], &[2.0, 4.0, 8.0]]);
    }

    #[test]
    fn weighted_rule_uses_seat_weights() {
        let rule = RuleSpec::new(RuleKind::WeightedQProportional {
            q: RiskMetric::Mean,
            weights: vec![1.0, 2.0],
        });
        // shares 3/7 and 4/7
        let cm = rule.apply(&pool_a()).unwrap();
        assert_rows(
            &cm,
            &[&[6.0 / 7.0, 18.0 / 7.0, 30.0 / 7.0], &[8.0 / 7.0, 24.0 / 7.0, 40.0 / 7.0]],
        );
        let short = RuleSpec::new(RuleKind::WeightedQProportional {
            q: RiskMetric::Mean,
            weights: vec![1.0],
        });
        assert!(matches!(short.apply(&pool_a()), Err(Error::InvalidRule(_))));
        let negative = RuleSpec::new(RuleKind::WeightedQProportional {
            q: RiskMetric::Mean,
            weights: vec![1.0, -1.0],
        });
        assert!(negative.apply(&pool_a()).is_err());
    }

    #[test]
    fn expected_contribution_examples() {
        let space = pool_a().space().clone();
        let uni = RuleSpec::uniform().apply(&pool_a()).unwrap();
        assert_eq!(expected_contributions(&uni, &space), vec![2.5, 2.5]);
        let sa = RuleSpec::new(RuleKind::StandAlone).apply(&pool_a()).unwrap();
        assert_eq!(expected_contributions(&sa, &space), vec![3.0, 2.0]);
        let zero = Pool::new(space.clone(), vec![vec![0.0; 3]; 2]).unwrap();
        let cm = RuleSpec::uniform().apply(&zero).unwrap();
        assert_eq!(expected_contributions(&cm, &space), vec![0.0, 0.0]);
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(RuleSpec::mean_proportional().id(), "mean_proportional");
        assert_eq!(
            RuleSpec::linear(RiskMetric::Mean, BiMetric::Covariance).id(),
            "q1q2_linear[mean;cov]"
        );
        assert_eq!(
            RuleSpec::new(RuleKind::ScenarioLinear { typical: 0, high: 2, low: 1 }).id(),
            "scenario_linear[0,2,1]"
        );
    }
}
