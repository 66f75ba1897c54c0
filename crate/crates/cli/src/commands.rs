//! The four subcommands. Each returns its artifacts; nothing is written
//! until [`emit`] runs.

use std::path::{Path, PathBuf};

use serde::Serialize;

use riskshare::axioms::{
    check_property, classify as classify_rules, implication_violations, classified_rules, theorem_harness, Battery,
    PropertyReport, TheoremReport, Tolerance,
};
use riskshare::prob::ContributionMatrix;
use riskshare::rules::{expected_contributions, DegeneratePolicy};
use riskshare::Pool;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pool_file::{contributions_csv, read_pool};
use crate::report::{fmt_num, property_table, theorem_markdown, to_json};

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Set when the run completed but a verdict deviated from expectation.
    pub mismatch: Option<String>,
}

fn artifacts(format: Format, stem: &str, json: String, md: String) -> Vec<Artifact> {
    let mut out = vec![];
    if format != Format::Json {
        out.push(Artifact { name: format!("{stem}.md"), content: md });
    }
    if format != Format::Md {
        out.push(Artifact { name: format!("{stem}.json"), content: json });
    }
    out
}

/// Write artifacts into `out` (created if needed) or concatenate them on
/// stdout. Returns the text for stdout.
pub fn emit(outcome: &Outcome, out: Option<&Path>) -> CliResult<String> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let mut listing = String::new();
            for a in &outcome.artifacts {
                let path: PathBuf = dir.join(&a.name);
                std::fs::write(&path, &a.content).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                listing.push_str(&format!("wrote {}\n", path.display()));
            }
            Ok(listing)
        }
        None => Ok(outcome
            .artifacts
            .iter()
            .map(|a| a.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")),
    }
}

fn load_pool(cfg: &RunConfig) -> CliResult<Option<Pool>> {
    cfg.pool.as_deref().map(read_pool).transpose()
}

fn battery(cfg: &RunConfig, pool: Option<Pool>) -> CliResult<Battery> {
    match pool {
        Some(p) => Ok(Battery::from_pools(vec![p])?),
        None => Ok(Battery::generate(cfg.seed(), &cfg.battery_params()?)?),
    }
}

#[derive(Serialize)]
struct BatteryInfo<'a> {
    seed: Option<u64>,
    pools: usize,
    atoms: usize,
    weights: &'a [f64],
    labels: &'a [String],
}

fn battery_info(b: &Battery) -> BatteryInfo<'_> {
    BatteryInfo {
        seed: b.seed,
        pools: b.len(),
        atoms: b.space().atom_count(),
        weights: b.space().weights(),
        labels: b.labels(),
    }
}

#[derive(Serialize)]
struct ComputeSummary {
    rule: String,
    degenerate_policy: DegeneratePolicy,
    participants: usize,
    atoms: usize,
    expected_contributions: Vec<f64>,
    allocation_residuals: Vec<f64>,
    max_abs_residual: f64,
}

pub fn compute(cfg: &RunConfig) -> CliResult<Outcome> {
    let pool = load_pool(cfg)?.ok_or_else(|| CliError::Input("compute needs --pool".into()))?;
    let rule = cfg.rule(pool.participants(), pool.atoms())?;
    let cm: ContributionMatrix = rule.apply(&pool)?;
    let s = pool.aggregate_values();
    let residuals = cm.allocation_residuals(&pool);
    let summary = ComputeSummary {
        rule: rule.id(),
        degenerate_policy: rule.degenerate,
        participants: pool.participants(),
        atoms: pool.atoms(),
        expected_contributions: expected_contributions(&cm, pool.space()),
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        allocation_residuals: residuals,
    };

    let mut md = format!("# Contributions: {}\n\n| Participant | E[C_i] |\n|---|---|\n", summary.rule);
    for (i, e) in summary.expected_contributions.iter().enumerate() {
        md.push_str(&format!("| {} | {} |\n", i + 1, fmt_num(*e)));
    }
    md.push_str("\n| Atom | S | Residual |\n|---|---|---|\n");
    for (j, r) in summary.allocation_residuals.iter().enumerate() {
        md.push_str(&format!("| {} | {} | {} |\n", j + 1, fmt_num(s[j]), fmt_num(*r)));
    }

    let mut out = vec![Artifact { name: "contributions.csv".into(), content: contributions_csv(&cm, &s)? }];
    out.extend(artifacts(cfg.format(), "summary", to_json(&summary)?, md));
    Ok(Outcome { artifacts: out, mismatch: None })
}

#[derive(Serialize)]
struct CheckDocument<'a> {
    rule: String,
    battery: BatteryInfo<'a>,
    tolerance: Tolerance,
    permutation_seed: u64,
    reports: Vec<PropertyReport>,
    implication_violations: Vec<String>,
}

pub fn check(cfg: &RunConfig) -> CliResult<Outcome> {
    let pool = load_pool(cfg)?;
    let tol = cfg.tolerance()?;
    let kinds = cfg.properties()?;
    let b = battery(cfg, pool.clone())?;
    let (n, m) = match &pool {
        Some(p) => (p.participants(), p.atoms()),
        None => (cfg.battery_params()?.max_participants, b.space().atom_count()),
    };
    let rule = cfg.rule(n, m)?;
    if let Some(p) = &pool {
        rule.apply(p)?;
    }
    let perms = cfg.perms();
    let reports = kinds
        .iter()
        .map(|k| check_property(&rule, k, b.pools(), &perms, &tol))
        .collect::<riskshare::Result<Vec<_>>>()?;
    let doc = CheckDocument {
        rule: rule.id(),
        battery: battery_info(&b),
        tolerance: tol,
        permutation_seed: cfg.seed(),
        implication_violations: implication_violations(&reports),
        reports,
    };
    let md = format!(
        "# Property check: {}\n\nBattery: {} pool(s), seed {}\n\n{}",
        doc.rule,
        doc.battery.pools,
        doc.battery.seed.map(|s| s.to_string()).unwrap_or_else(|| "n/a".into()),
        property_table(&doc.reports)
    );
    let mismatch = (!doc.implication_violations.is_empty())
        .then(|| format!("strongly aggregate without source-anonymity: {}", doc.implication_violations.join(", ")));
    Ok(Outcome { artifacts: artifacts(cfg.format(), "report", to_json(&doc)?, md), mismatch })
}

pub fn classify(cfg: &RunConfig) -> CliResult<Outcome> {
    let pool = load_pool(cfg)?;
    let tol = cfg.tolerance()?;
    let b = battery(cfg, pool)?;
    let m = b.space().atom_count();
    let rules = match &cfg.rules {
        None => {
            let (t, h, l) = cfg.omegas(m)?;
            classified_rules(t, h, l)
        }
        Some(names) => names
            .iter()
            .map(|n| {
                cfg.named_rule(n, cfg.battery_params()?.max_participants, m)
                    .map(|r| r.with_policy(DegeneratePolicy::UniformFallback))
            })
            .collect::<CliResult<Vec<_>>>()?,
    };
    let matrix = classify_rules(&rules, &b, &cfg.perms(), &tol)?;
    let cells: Vec<PropertyReport> = matrix.rows.iter().flat_map(|r| r.cells.clone()).collect();
    let implication = implication_violations(&cells);
    let mismatches = matrix.mismatches();

    #[derive(Serialize)]
    struct Doc<'a> {
        battery: BatteryInfo<'a>,
        matrix: &'a riskshare::axioms::ClassificationMatrix,
        mismatches: &'a [riskshare::axioms::Mismatch],
        implication_violations: &'a [String],
    }
    let json = to_json(&Doc {
        battery: battery_info(&b),
        matrix: &matrix,
        mismatches: &mismatches,
        implication_violations: &implication,
    })?;
    let mut md = format!("# Classification\n\nBattery: {} pool(s), seed {}\n\n", b.len(), cfg.seed());
    md.push_str(&matrix.to_markdown());
    let witnessed: Vec<&PropertyReport> = cells.iter().filter(|c| c.witness.is_some()).collect();
    if !witnessed.is_empty() {
        md.push_str("\n## Witnesses\n\n");
        md.push_str(&property_table(&witnessed.into_iter().cloned().collect::<Vec<_>>()));
    }
    let mut problems: Vec<String> = mismatches
        .iter()
        .map(|m| format!("{} / {}: expected {}, got {:?}", m.rule, m.property, if m.expected_holds { "holds" } else { "violated" }, m.verdict))
        .collect();
    problems.extend(implication.iter().map(|r| format!("{r}: strongly aggregate without source-anonymity")));
    let mismatch = (!problems.is_empty()).then(|| problems.join("; "));
    Ok(Outcome { artifacts: artifacts(cfg.format(), "classification", json, md), mismatch })
}

pub fn theorems(cfg: &RunConfig) -> CliResult<Outcome> {
    let pool = load_pool(cfg)?;
    let tol = cfg.tolerance()?;
    let b = battery(cfg, pool)?;
    let params = cfg.theorem_params(b.space().atom_count())?;
    let reports = cfg
        .theorems()?
        .into_iter()
        .map(|id| theorem_harness(id, &params, &b, &cfg.perms(), &tol))
        .collect::<riskshare::Result<Vec<TheoremReport>>>()?;

    #[derive(Serialize)]
    struct Doc<'a> {
        battery: BatteryInfo<'a>,
        tolerance: Tolerance,
        theorems: &'a [TheoremReport],
    }
    let json = to_json(&Doc { battery: battery_info(&b), tolerance: tol, theorems: &reports })?;
    let mut md = format!("# Theorem harness\n\nBattery: {} pool(s), seed {}\n\n", b.len(), cfg.seed());
    for r in &reports {
        md.push_str(&theorem_markdown(r));
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}: {}", r.theorem, r.failures.join("; ")))
        .collect();
    let mismatch = (!failed.is_empty()).then(|| failed.join(" | "));
    Ok(Outcome { artifacts: artifacts(cfg.format(), "theorems", json, md), mismatch })
}
