//! Hand-derived values, each recomputed here from first principles rather
//! than through the rule implementations.

use riskshare::axioms::{
    check_reshuffling, check_source_anonymous, check_strongly_aggregate, PermutationSet, Tolerance, Verdict,
};
use riskshare::oracle::{oracle_conditional_mean, oracle_rule_equivalence};
use riskshare::rules::{expected_contributions, RuleKind};
use riskshare::{BiMetric, Error, Permutation, Pool, RiskMetric, RuleSpec};

fn pool_a() -> Pool {
    Pool::from_parts(vec![0.5, 0.25, 0.25], vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]]).unwrap()
}

fn swap() -> PermutationSet {
    PermutationSet::Explicit(vec![Permutation::swap(2, 0, 1).unwrap()])
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn mean_proportional_by_hand() {
    // E[X1] = 0.25*4 + 0.25*8 = 3, E[X2] = 2, shares 3/5 and 2/5 of S = (2, 6, 10).
    let s = [2.0, 6.0, 10.0];
    let c = RuleSpec::mean_proportional().apply(&pool_a()).unwrap();
    assert!(close(c.row(0), &s.map(|v| v * 0.6)));
    assert!(close(c.row(1), &s.map(|v| v * 0.4)));

    let swapped = pool_a().reshuffle(&Permutation::swap(2, 0, 1).unwrap()).unwrap();
    let cs = RuleSpec::mean_proportional().apply(&swapped).unwrap();
    assert!(close(cs.row(0), &[0.8, 2.4, 4.0]));
    assert!(close(cs.row(0), c.row(1)));
}

#[test]
fn covariance_linear_by_hand() {
    // var(S) = 0.5*16 + 0.25*0 + 0.25*16 = 12 with E[S] = 6.
    // cov(X1, S) = 12, cov(X2, S) = 0: X1 takes every deviation.
    let c = RuleSpec::new(RuleKind::CovarianceLinear).apply(&pool_a()).unwrap();
    assert!(close(c.row(0), &[0.0, 4.0, 8.0]));
    assert!(close(c.row(1), &[2.0, 2.0, 2.0]));
    let e = expected_contributions(&c, pool_a().space());
    assert!(close(&e, &[3.0, 2.0]));
}

#[test]
fn degenerate_linear_names_condition() {
    let flat = Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
    match RuleSpec::new(RuleKind::CovarianceLinear).apply(&flat) {
        Err(Error::DegeneratePool { condition, .. }) => assert_eq!(condition, "var(S)=0"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn conditional_mean_oracle_examples() {
    let tied = Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
    assert_eq!(oracle_conditional_mean(&tied).rows(), &[vec![2.0, 2.0], vec![2.0, 2.0]]);
    let fast = RuleSpec::new(RuleKind::ConditionalMean).apply(&tied).unwrap();
    assert_eq!(fast, oracle_conditional_mean(&tied));
    assert_eq!(RuleSpec::new(RuleKind::ConditionalMean).apply(&pool_a()).unwrap().rows(), pool_a().losses());
}

#[test]
fn axiom_examples() {
    let tol = Tolerance::default();
    let a = [pool_a()];
    assert!(check_reshuffling(&RuleSpec::mean_proportional(), &a, &swap(), &tol).unwrap().verdict.holds());
    let r = check_reshuffling(&RuleSpec::new(RuleKind::AllInOne), &a, &swap(), &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    let r = check_source_anonymous(&RuleSpec::mean_proportional(), &a, &swap(), &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);

    let b = Pool::from_parts(vec![0.5, 0.25, 0.25], vec![vec![2.0, 6.0, 10.0], vec![0.0; 3]]).unwrap();
    let r = check_strongly_aggregate(&RuleSpec::mean_proportional(), &[pool_a(), b], &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
}

#[test]
fn declared_equivalences() {
    let pools = vec![
        pool_a(),
        Pool::from_parts(vec![0.25; 4], vec![vec![1.0, 5.0, 2.0, 7.0], vec![3.0, 0.0, 4.0, 1.0], vec![2.0, 2.0, 9.0, 0.0]])
            .unwrap(),
    ];
    let pairs = [
        (RuleSpec::q_proportional(RiskMetric::Constant(7.0)), RuleSpec::uniform()),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::Covariance), RuleSpec::new(RuleKind::CovarianceLinear)),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::FirstVariance), RuleSpec::new(RuleKind::VarianceLinear)),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::Lift(RiskMetric::Mean)), RuleSpec::mean_proportional()),
    ];
    for (a, b) in pairs {
        let r = oracle_rule_equivalence(&a, &b, &pools).unwrap();
        assert!(r.max_deviation <= 1e-12, "{a} vs {b}: {}", r.max_deviation);
    }
    let r = oracle_rule_equivalence(&RuleSpec::mean_proportional(), &RuleSpec::uniform(), &pools[..1]).unwrap();
    assert!(r.max_deviation >= 0.2);
}
