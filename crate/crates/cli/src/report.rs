//! JSON and Markdown rendering of reports.

use serde::Serialize;
use serde_json::Value;

use riskshare::axioms::{PropertyReport, TheoremReport, Verdict, Witness};

use crate::error::{CliError, CliResult};

/// Round to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and floats at 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Input(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&normalize(v)).map_err(|e| CliError::Input(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn fmt_num(v: f64) -> String {
    let r = round12(v);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else if r.abs() < 1e-4 {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::HoldsOnBattery => "holds_on_battery",
        Verdict::Violated => "violated",
        Verdict::Inconclusive => "inconclusive",
        Verdict::Skipped => "skipped",
        Verdict::Refused => "refused",
    }
}

pub fn witness_summary(w: &Witness) -> String {
    let mut s = format!("pool {}, atom {}, X{}", w.pool_index, w.atom, w.participant + 1);
    if let Some(p) = &w.permutation {
        let m: Vec<String> = p.mapping().iter().map(|k| (k + 1).to_string()).collect();
        s.push_str(&format!(", pi=({})", m.join(" ")));
    }
    match (w.other_pool_index, w.other_atom) {
        (Some(k), Some(b)) => s.push_str(&format!(", vs pool {k}, atom {b}")),
        (None, Some(b)) => s.push_str(&format!(", vs atom {b}")),
        _ => {}
    }
    s.push_str(&format!(": {} vs {} (tol {})", fmt_num(w.lhs), fmt_num(w.rhs), fmt_num(w.tolerance)));
    s
}

pub fn property_table(reports: &[PropertyReport]) -> String {
    let mut s = String::from("| Rule | Property | Verdict | Pools | Witness / note |\n|---|---|---|---|---|\n");
    for r in reports {
        let detail = match (&r.witness, &r.note) {
            (Some(w), _) => witness_summary(w),
            (None, Some(n)) => n.clone(),
            (None, None) => String::new(),
        };
        s.push_str(&format!(
            "| {} | {} | {} | {}/{} | {} |\n",
            r.rule,
            r.property,
            verdict_label(r.verdict),
            r.pools_checked,
            r.pools_checked + r.pools_skipped,
            detail
        ));
    }
    s
}

pub fn theorem_markdown(r: &TheoremReport) -> String {
    let mut s = format!("## {}: {}\n\n", r.theorem, r.statement);
    if let Some(m) = &r.metrics {
        s.push_str(&format!("Metrics: {m}\n\n"));
    }
    s.push_str(&format!("Named rule: `{}`. Result: **{}**\n\n", r.named_rule, if r.passed { "passed" } else { "FAILED" }));
    if !r.hypotheses.is_empty() {
        s.push_str("### Hypotheses\n\n| Metric | Requirement | Satisfied |\n|---|---|---|\n");
        for h in &r.hypotheses {
            s.push_str(&format!("| {} | {} | {} |\n", h.metric, h.requirement, if h.satisfied { "yes" } else { "no" }));
        }
        s.push('\n');
    }
    s.push_str("### Only if\n\n");
    s.push_str(&property_table(&r.only_if));
    s.push_str("\n### Uniqueness\n\n| Rule | Passes axioms | Max deviation | Coincides |\n|---|---|---|---|\n");
    for u in &r.uniqueness {
        s.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            u.rule,
            if u.passes_axioms { "yes" } else { "no" },
            fmt_num(u.max_deviation),
            if u.coincides { "yes" } else { "no" }
        ));
    }
    s.push_str("\n### Independence\n\n");
    for c in &r.counterexamples {
        s.push_str(&format!(
            "`{}` (expected to hold: {}; expected violated: {}): {}\n\n",
            c.rule,
            if c.expected_holds.is_empty() { "-".into() } else { c.expected_holds.join(", ") },
            c.expected_violated.join(", "),
            if c.as_expected { "as expected" } else { "NOT as expected" }
        ));
        s.push_str(&property_table(&c.reports));
        s.push('\n');
    }
    if !r.failures.is_empty() {
        s.push_str("### Failures\n\n");
        for f in &r.failures {
            s.push_str(&format!("- {f}\n"));
        }
        s.push('\n');
    }
    s
}
