use std::fmt;

use serde::Serialize;

use super::{check_property, Battery, PermutationSet, PropertyKind, PropertyReport, Tolerance, Verdict};
use crate::error::Result;
use crate::metrics::{verify_attributes, verify_bi_attributes, BiMetric, RiskMetric};
use crate::oracle::oracle_rule_equivalence;
use crate::rules::{DegeneratePolicy, RuleKind, RuleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl TheoremId {
    pub const ALL: [TheoremId; 6] = [TheoremId::T1, TheoremId::T2, TheoremId::T3, TheoremId::T4, TheoremId::T5, TheoremId::T6];

    pub fn statement(&self) -> &'static str {
        match self {
            TheoremId::T1 => "uniform <=> reshuffling + source-anonymous contributions",
            TheoremId::T2 => "uniform <=> reshuffling + strongly aggregate contributions",
            TheoremId::T3 => "q-proportional <=> reshuffling + source-anonymous contribution-over-q ratios",
            TheoremId::T4 => "q-proportional <=> strongly aggregate contribution-over-q ratios (q normalized, additive)",
            TheoremId::T5 => "(q1,q2)-linear <=> reshuffling + source-anonymous standardized contributions",
            TheoremId::T6 => {
                "(q1,q2)-linear <=> strongly aggregate standardized contributions (q1 normalized, additive; q2 zero at zero, additive in first argument)"
            }
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Metrics and scenario indices used by the harness and its catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremParams {
    pub q: RiskMetric,
    pub q1: RiskMetric,
    pub q2: BiMetric,
    pub typical: usize,
    /// Defaults to the last atom.
    pub high: Option<usize>,
    pub low: usize,
}

impl Default for TheoremParams {
    fn default() -> Self {
        Self {
            q: RiskMetric::Mean,
            q1: RiskMetric::Mean,
            q2: BiMetric::Covariance,
            typical: 0,
            high: None,
            low: 1,
        }
    }
}

/// Rules searched for alternative solutions of the axioms, all with uniform
/// fallback on degenerate pools.
pub fn catalog(typical: usize, high: usize, low: usize) -> Vec<RuleSpec> {
    let mean = RiskMetric::Mean;
    let kinds = vec![
        RuleKind::Uniform,
        RuleKind::QProportional(RiskMetric::Constant(1.0)),
        RuleKind::QProportional(mean.clone()),
        RuleKind::QProportional(RiskMetric::Variance),
        RuleKind::QProportional(RiskMetric::StdDev),
        RuleKind::ScenarioProportional { typical },
        RuleKind::WeightedQProportional { q: mean.clone(), weights: (1..=16).map(f64::from).collect() },
        RuleKind::CovarianceLinear,
        RuleKind::VarianceLinear,
        RuleKind::LinearQ1Q2 { q1: mean.clone(), q2: BiMetric::Covariance },
        RuleKind::LinearQ1Q2 { q1: mean.clone(), q2: BiMetric::FirstVariance },
        RuleKind::LinearQ1Q2 { q1: mean.clone(), q2: BiMetric::Lift(mean.clone()) },
        RuleKind::ScenarioLinear { typical, high, low },
        RuleKind::ConditionalMean,
        RuleKind::OrderStatistics,
        RuleKind::AllInOne,
        RuleKind::StandAlone,
        RuleKind::Hybrid(mean),
        RuleKind::Hybrid(RiskMetric::Scenario(typical)),
    ];
    kinds
        .into_iter()
        .map(|k| RuleSpec::new(k).with_policy(DegeneratePolicy::UniformFallback))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub metric: String,
    pub requirement: String,
    pub satisfied: bool,
    /// Battery pool on which an identity failed.
    pub witness_pool: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessRow {
    pub rule: String,
    pub passes_axioms: bool,
    pub max_deviation: f64,
    pub coincides: bool,
    pub pools_compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub rule: String,
    pub expected_holds: Vec<String>,
    pub expected_violated: Vec<String>,
    pub reports: Vec<PropertyReport>,
    pub as_expected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub theorem: TheoremId,
    pub statement: String,
    pub metrics: Option<String>,
    pub named_rule: String,
    pub axioms: Vec<String>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub only_if: Vec<PropertyReport>,
    pub uniqueness: Vec<UniquenessRow>,
    pub counterexamples: Vec<CounterexampleRow>,
    pub failures: Vec<String>,
    pub passed: bool,
}

fn named_rule(id: TheoremId, p: &TheoremParams) -> RuleSpec {
    let kind = match id {
        TheoremId::T1 | TheoremId::T2 => RuleKind::Uniform,
        TheoremId::T3 | TheoremId::T4 => match &p.q {
            RiskMetric::Scenario(k) => RuleKind::ScenarioProportional { typical: *k },
            q => RuleKind::QProportional(q.clone()),
        },
        TheoremId::T5 | TheoremId::T6 => match (&p.q1, &p.q2) {
            (RiskMetric::Mean, BiMetric::Covariance) => RuleKind::CovarianceLinear,
            (RiskMetric::Mean, BiMetric::FirstVariance) => RuleKind::VarianceLinear,
            (q1, q2) => RuleKind::LinearQ1Q2 { q1: q1.clone(), q2: q2.clone() },
        },
    };
    RuleSpec::new(kind)
}

fn axioms(id: TheoremId, p: &TheoremParams) -> Vec<PropertyKind> {
    match id {
        TheoremId::T1 => vec![PropertyKind::Reshuffling, PropertyKind::SourceAnonymous],
        TheoremId::T2 => vec![PropertyKind::Reshuffling, PropertyKind::StronglyAggregate],
        TheoremId::T3 => vec![PropertyKind::Reshuffling, PropertyKind::SourceAnonymousQRatio(p.q.clone())],
        TheoremId::T4 => vec![PropertyKind::StronglyAggregateQRatio(p.q.clone())],
        TheoremId::T5 => vec![
            PropertyKind::Reshuffling,
            PropertyKind::SourceAnonymousStd(p.q1.clone(), p.q2.clone()),
        ],
        TheoremId::T6 => vec![PropertyKind::StronglyAggregateStd(p.q1.clone(), p.q2.clone())],
    }
}

/// `(rule, expected to hold, expected to be violated)`.
fn counterexamples(id: TheoremId, p: &TheoremParams, ax: &[PropertyKind]) -> Vec<(RuleSpec, Vec<PropertyKind>, Vec<PropertyKind>)> {
    let rule = |k: RuleKind| RuleSpec::new(k).with_policy(DegeneratePolicy::UniformFallback);
    let first = || vec![ax[0].clone()];
    let second = || vec![ax[ax.len() - 1].clone()];
    match id {
        TheoremId::T1 => vec![
            (rule(RuleKind::StandAlone), first(), second()),
            (rule(RuleKind::OrderStatistics), second(), first()),
            (RuleSpec::mean_proportional(), first(), second()),
        ],
        TheoremId::T2 => vec![
            (rule(RuleKind::StandAlone), first(), second()),
            (rule(RuleKind::AllInOne), second(), first()),
        ],
        TheoremId::T3 => vec![
            (rule(RuleKind::StandAlone), first(), second()),
            (rule(RuleKind::Hybrid(p.q.clone())), second(), first()),
        ],
        TheoremId::T5 => vec![(rule(RuleKind::StandAlone), first(), second())],
        TheoremId::T4 | TheoremId::T6 => vec![(rule(RuleKind::Uniform), vec![], second())],
    }
}

/// Verify one characterization theorem on a battery: the named rule meets
/// the axioms, every catalog rule that meets them coincides with it, and
/// the designated counterexamples separate the axioms.
pub fn theorem_harness(
    id: TheoremId,
    params: &TheoremParams,
    battery: &Battery,
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<TheoremReport> {
    let pools = battery.pools();
    let m = battery.space().atom_count();
    let high = params.high.unwrap_or(m - 1);
    let named = named_rule(id, params);
    let ax = axioms(id, params);
    let mut failures = vec![];

    let mut hypotheses = vec![];
    match id {
        TheoremId::T4 => {
            let a = verify_attributes(&params.q, pools)?;
            hypotheses.push(HypothesisCheck {
                metric: a.metric.clone(),
                requirement: "normalized and additive".into(),
                satisfied: a.normalized_and_additive(),
                witness_pool: a.normalized.witness.or(a.additive.witness).map(|w| w.pool_index),
            });
        }
        TheoremId::T6 => {
            let a = verify_attributes(&params.q1, pools)?;
            hypotheses.push(HypothesisCheck {
                metric: a.metric.clone(),
                requirement: "normalized and additive".into(),
                satisfied: a.normalized_and_additive(),
                witness_pool: a.normalized.witness.or(a.additive.witness).map(|w| w.pool_index),
            });
            let b = verify_bi_attributes(&params.q2, pools)?;
            hypotheses.push(HypothesisCheck {
                metric: b.metric.clone(),
                requirement: "zero at zero and additive in the first argument".into(),
                satisfied: b.zero_and_additive(),
                witness_pool: b.zero_at_zero.witness.or(b.additive_in_first.witness).map(|w| w.pool_index),
            });
        }
        _ => {}
    }
    for h in hypotheses.iter().filter(|h| !h.satisfied) {
        failures.push(format!("hypothesis not met: {} is not {}", h.metric, h.requirement));
    }

    let only_if = ax
        .iter()
        .map(|k| check_property(&named, k, pools, perms, tol))
        .collect::<Result<Vec<_>>>()?;
    for r in only_if.iter().filter(|r| !r.verdict.holds()) {
        failures.push(format!("{} does not satisfy {} ({:?})", r.rule, r.property, r.verdict));
    }

    let bound = tol.bound(
        pools
            .iter()
            .flat_map(|p| p.aggregate_values())
            .fold(0.0f64, |a, s| a.max(s.abs())),
    );
    let mut rules = catalog(params.typical, high, params.low);
    let named_fallback = named.clone().with_policy(DegeneratePolicy::UniformFallback);
    if !rules.contains(&named_fallback) {
        rules.insert(0, named_fallback);
    }
    let mut uniqueness = vec![];
    for rule in &rules {
        let mut passes = true;
        for k in &ax {
            if !check_property(rule, k, pools, perms, tol)?.verdict.holds() {
                passes = false;
                break;
            }
        }
        let eq = oracle_rule_equivalence(&named, rule, pools)?;
        let row = UniquenessRow {
            rule: rule.id(),
            passes_axioms: passes,
            max_deviation: eq.max_deviation,
            coincides: eq.max_deviation <= bound,
            pools_compared: eq.pools_compared,
        };
        if row.passes_axioms && !row.coincides {
            failures.push(format!(
                "{} satisfies the axioms but differs from {} by {:e}",
                row.rule,
                named.id(),
                row.max_deviation
            ));
        }
        uniqueness.push(row);
    }

    let mut rows = vec![];
    for (rule, holds, violated) in counterexamples(id, params, &ax) {
        let mut reports = vec![];
        let mut ok = true;
        for k in &holds {
            let r = check_property(&rule, k, pools, perms, tol)?;
            ok &= r.verdict.holds();
            reports.push(r);
        }
        for k in &violated {
            let r = check_property(&rule, k, pools, perms, tol)?;
            ok &= r.verdict == Verdict::Violated && r.witness.is_some();
            reports.push(r);
        }
        if !ok {
            failures.push(format!("counterexample {} did not separate the axioms as expected", rule.id()));
        }
        rows.push(CounterexampleRow {
            rule: rule.id(),
            expected_holds: holds.iter().map(|k| k.label()).collect(),
            expected_violated: violated.iter().map(|k| k.label()).collect(),
            reports,
            as_expected: ok,
        });
    }

    let metrics = match id {
        TheoremId::T1 | TheoremId::T2 => None,
        TheoremId::T3 | TheoremId::T4 => Some(format!("q={}", params.q)),
        TheoremId::T5 | TheoremId::T6 => Some(format!("q1={}, q2={}", params.q1, params.q2)),
    };
    Ok(TheoremReport {
        theorem: id,
        statement: id.statement().into(),
        metrics,
        named_rule: named.id(),
        axioms: ax.iter().map(|k| k.label()).collect(),
        hypotheses,
        only_if,
        uniqueness,
        counterexamples: rows,
        passed: failures.is_empty(),
        failures,
    })
}
