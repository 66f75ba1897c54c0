use serde::Serialize;

use super::{check_property, Battery, PermutationSet, PropertyKind, PropertyReport, Tolerance, Verdict};
use crate::error::Result;
use crate::metrics::RiskMetric;
use crate::rules::{DegeneratePolicy, RuleKind, RuleSpec};

pub const CLASSIFIED_PROPERTIES: [PropertyKind; 4] = [
    PropertyKind::Reshuffling,
    PropertyKind::SourceAnonymous,
    PropertyKind::Aggregate,
    PropertyKind::StronglyAggregate,
];

const HEADERS: [&str; 4] = [
    "Reshuffling",
    "Source-anonymous contributions",
    "Aggregate contributions",
    "Strongly aggregate contributions",
];

/// The seven classified rules, in table order, with uniform fallback on
/// degenerate pools.
pub fn classified_rules(typical: usize, high: usize, low: usize) -> Vec<RuleSpec> {
    [
        RuleKind::OrderStatistics,
        RuleKind::ConditionalMean,
        RuleKind::QProportional(RiskMetric::Mean),
        RuleKind::ScenarioProportional { typical },
        RuleKind::ScenarioLinear { typical, high, low },
        RuleKind::AllInOne,
        RuleKind::Uniform,
    ]
    .into_iter()
    .map(|k| RuleSpec::new(k).with_policy(DegeneratePolicy::UniformFallback))
    .collect()
}

/// Expected (reshuffling, source-anonymous, aggregate, strongly aggregate)
/// pattern for a classified rule.
pub fn classified_expected(rule: &RuleSpec) -> Option<[bool; 4]> {
    Some(match &rule.kind {
        RuleKind::OrderStatistics => [false, true, false, false],
        RuleKind::ConditionalMean => [true, false, true, false],
        RuleKind::QProportional(RiskMetric::Mean) => [true, false, true, false],
        RuleKind::ScenarioProportional { .. } => [true, false, true, false],
        RuleKind::ScenarioLinear { .. } => [true, false, true, false],
        RuleKind::AllInOne => [false, true, true, true],
        RuleKind::Uniform => [true, true, true, true],
        _ => return None,
    })
}

fn row_label(rule: &RuleSpec) -> String {
    match &rule.kind {
        RuleKind::OrderStatistics => "Order statistics".into(),
        RuleKind::ConditionalMean => "Conditional mean".into(),
        RuleKind::QProportional(RiskMetric::Mean) => "Mean-proportional".into(),
        RuleKind::ScenarioProportional { .. } => "Scenario-based proportional".into(),
        RuleKind::ScenarioLinear { .. } => "Scenario-based linear".into(),
        RuleKind::AllInOne => "All-in-one".into(),
        RuleKind::Uniform => "Uniform".into(),
        _ => rule.id(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationRow {
    pub rule: String,
    pub label: String,
    pub cells: Vec<PropertyReport>,
    pub expected: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub rule: String,
    pub property: String,
    pub expected_holds: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMatrix {
    pub battery_seed: Option<u64>,
    pub battery_size: usize,
    pub tolerance: Tolerance,
    pub properties: Vec<String>,
    pub rows: Vec<ClassificationRow>,
}

fn symbol(v: Verdict) -> &'static str {
    match v {
        Verdict::HoldsOnBattery => "✓",
        Verdict::Violated => "−",
        _ => "?",
    }
}

impl ClassificationMatrix {
    /// Cells that disagree with the expected pattern. An expected "holds"
    /// needs `holds_on_battery`; an expected failure needs a witness.
    pub fn mismatches(&self) -> Vec<Mismatch> {
        let mut out = vec![];
        for row in &self.rows {
            let Some(expected) = &row.expected else { continue };
            for (cell, &want) in row.cells.iter().zip(expected) {
                let ok = if want {
                    cell.verdict == Verdict::HoldsOnBattery
                } else {
                    cell.verdict == Verdict::Violated && cell.witness.is_some()
                };
                if !ok {
                    out.push(Mismatch {
                        rule: row.rule.clone(),
                        property: cell.property.clone(),
                        expected_holds: want,
                        verdict: cell.verdict,
                    });
                }
            }
        }
        out
    }

    pub fn symbols(&self) -> Vec<Vec<&'static str>> {
        self.rows.iter().map(|r| r.cells.iter().map(|c| symbol(c.verdict)).collect()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Risk-sharing rule |");
        for p in &self.properties {
            let h = CLASSIFIED_PROPERTIES
                .iter()
                .position(|k| k.label() == *p)
                .map(|k| HEADERS[k].to_string())
                .unwrap_or_else(|| p.clone());
            s.push_str(&format!(" {h} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&":---:|".repeat(self.properties.len()));
        s.push('\n');
        for (row, syms) in self.rows.iter().zip(self.symbols()) {
            s.push_str(&format!("| {} |", row.label));
            for sym in syms {
                s.push_str(&format!(" {sym} |"));
            }
            s.push('\n');
        }
        s
    }
}

/// Evaluate the four classification properties for every rule.
pub fn classify(
    rules: &[RuleSpec],
    battery: &Battery,
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<ClassificationMatrix> {
    let mut rows = Vec::with_capacity(rules.len());
    for rule in rules {
        let cells = CLASSIFIED_PROPERTIES
            .iter()
            .map(|k| check_property(rule, k, battery.pools(), perms, tol))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ClassificationRow {
            rule: rule.id(),
            label: row_label(rule),
            cells,
            expected: classified_expected(rule).map(|e| e.to_vec()),
        });
    }
    Ok(ClassificationMatrix {
        battery_seed: battery.seed,
        battery_size: battery.len(),
        tolerance: *tol,
        properties: CLASSIFIED_PROPERTIES.iter().map(|k| k.label()).collect(),
        rows,
    })
}

/// Rules recorded as strongly aggregate while violating source-anonymity,
/// which is impossible for a correct checker.
pub fn implication_violations(reports: &[PropertyReport]) -> Vec<String> {
    let mut rules: Vec<&str> = reports.iter().map(|r| r.rule.as_str()).collect();
    rules.sort_unstable();
    rules.dedup();
    rules
        .into_iter()
        .filter(|rule| {
            let verdict = |p: &str| {
                reports
                    .iter()
                    .filter(|r| r.rule == *rule && r.property == p)
                    .map(|r| r.verdict)
                    .collect::<Vec<_>>()
            };
            verdict("strongly_aggregate").contains(&Verdict::HoldsOnBattery)
                && verdict("source_anonymous").contains(&Verdict::Violated)
        })
        .map(str::to_string)
        .collect()
}
