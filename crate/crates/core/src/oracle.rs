//! Brute-force reference computations used to cross-check the rule
//! implementations. Nothing here calls into the grouping or formula code of
//! [`crate::rules`]; the grouping is re-derived by pairwise comparison.

use serde::Serialize;

use crate::error::Result;
use crate::prob::{ContributionMatrix, Pool};
use crate::rules::RuleSpec;

/// `E[X_i | S]` by exhaustive pairwise grouping of atoms.
///
/// Two atoms are linked when their aggregates differ by at most
/// `1e-9 * max(1, min(|a|, |b|))`; groups are the connected components of
/// that relation, found without sorting.
pub fn oracle_conditional_mean(pool: &Pool) -> ContributionMatrix {
    let m = pool.atoms();
    let n = pool.participants();
    let p = pool.space().weights();

    let mut s = vec![0.0; m];
    for row in pool.losses() {
        for (j, x) in row.iter().enumerate() {
            s[j] += x;
        }
    }
    let linked = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().min(b.abs()).max(1.0);

    let mut component = vec![usize::MAX; m];
    let mut next = 0;
    for start in 0..m {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = next;
        let mut stack = vec![start];
        while let Some(j) = stack.pop() {
            for k in 0..m {
                if component[k] == usize::MAX && linked(s[j], s[k]) {
                    component[k] = next;
                    stack.push(k);
                }
            }
        }
        next += 1;
    }

    let mut out = vec![vec![0.0; m]; n];
    for j in 0..m {
        let members: Vec<usize> = (0..m).filter(|&k| component[k] == component[j]).collect();
        for i in 0..n {
            out[i][j] = if members.len() == 1 {
                pool.row(i)[j]
            } else {
                let num: f64 = members.iter().map(|&k| p[k] * pool.row(i)[k]).sum();
                let den: f64 = members.iter().map(|&k| p[k]).sum();
                num / den
            };
        }
    }
    ContributionMatrix::new(out)
}

/// Largest entrywise gap between two rules over a battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub left: String,
    pub right: String,
    pub max_deviation: f64,
    /// `(pool index, participant, atom)` of the largest gap.
    pub argmax: Option<(usize, usize, usize)>,
    pub pools_compared: usize,
    /// Pools on which either rule refused to produce contributions.
    pub pools_skipped: usize,
}

pub fn oracle_rule_equivalence(a: &RuleSpec, b: &RuleSpec, battery: &[Pool]) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport {
        left: a.id(),
        right: b.id(),
        max_deviation: 0.0,
        argmax: None,
        pools_compared: 0,
        pools_skipped: 0,
    };
    for (k, pool) in battery.iter().enumerate() {
        let (ca, cb) = match (a.apply(pool), b.apply(pool)) {
            (Ok(ca), Ok(cb)) => (ca, cb),
            (Err(crate::Error::DegeneratePool { .. }), _) | (_, Err(crate::Error::DegeneratePool { .. })) => {
                report.pools_skipped += 1;
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        report.pools_compared += 1;
        for i in 0..pool.participants() {
            for j in 0..pool.atoms() {
                let d = (ca.get(i, j) - cb.get(i, j)).abs();
                if d > report.max_deviation || report.argmax.is_none() {
                    report.max_deviation = report.max_deviation.max(d);
                    report.argmax = Some((k, i, j));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RiskMetric;

    #[test]
    fn symmetric_pool() {
        let pool = Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(oracle_conditional_mean(&pool).rows(), &[vec![2.0, 2.0], vec![2.0, 2.0]]);
    }

    #[test]
    fn distinct_aggregate_returns_pool() {
        let pool = Pool::from_parts(
            vec![0.5, 0.25, 0.25],
            vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]],
        )
        .unwrap();
        assert_eq!(oracle_conditional_mean(&pool).rows(), pool.losses());
    }

    #[test]
    fn three_atom_tie() {
        let third = 1.0 / 3.0;
        let pool = Pool::from_parts(
            vec![third, third, 1.0 - 2.0 * third],
            vec![vec![1.0, 3.0, 1.0], vec![3.0, 1.0, 3.0]],
        )
        .unwrap();
        let cm = oracle_conditional_mean(&pool);
        for j in 0..3 {
            assert!((cm.get(0, j) - 5.0 / 3.0).abs() < 1e-12);
            assert!((cm.get(1, j) - 7.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equivalence_examples() {
        let pool = Pool::from_parts(
            vec![0.5, 0.25, 0.25],
            vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]],
        )
        .unwrap();
        let battery = vec![pool];
        let r = oracle_rule_equivalence(
            &RuleSpec::q_proportional(RiskMetric::Constant(7.0)),
            &RuleSpec::uniform(),
            &battery,
        )
        .unwrap();
        assert_eq!(r.max_deviation, 0.0);
        let r = oracle_rule_equivalence(&RuleSpec::mean_proportional(), &RuleSpec::uniform(), &battery).unwrap();
        assert!((r.max_deviation - 1.0).abs() < 1e-12);
        assert!(r.max_deviation >= 0.2);
    }
}
