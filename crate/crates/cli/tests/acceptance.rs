//! Acceptance criteria. Each test prints one `ACCEPTANCE` line with its
//! verdict before asserting. Run with `--nocapture` to see them.

use std::process::Command;
use std::time::Instant;

use serde_json::Value;

use riskshare::axioms::{
    catalog, check_property, classify, random_pools, replay, classified_rules, theorem_harness, Battery, BatteryParams,
    PermutationSet, PropertyKind, PropertyReport, TheoremId, TheoremParams, TheoremReport, Tolerance, Verdict,
    CLASSIFIED_PROPERTIES,
};
use riskshare::metrics::verify_attributes;
use riskshare::oracle::{oracle_conditional_mean, oracle_rule_equivalence};
use riskshare::rules::{DegeneratePolicy, RuleKind};
use riskshare::{BiMetric, Pool, RiskMetric, RuleSpec};

fn report(n: u32, title: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE criterion {n} ({title}): {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn default_battery() -> Battery {
    Battery::generate(0, &BatteryParams::default()).unwrap()
}

fn harness(id: TheoremId, params: TheoremParams) -> TheoremReport {
    theorem_harness(id, &params, &default_battery(), &PermutationSet::default(), &Tolerance::default()).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riskshare"))
}

#[test]
fn criterion_1_full_allocation() {
    let start = Instant::now();
    let pools = random_pools(20240601, 1000, (1, 6), (1, 32), 100.0).unwrap();
    let mut worst = 0.0f64;
    let mut failures = vec![];
    for (k, pool) in pools.iter().enumerate() {
        let m = pool.atoms();
        let s = pool.aggregate_values();
        for rule in catalog(0, m - 1, 1.min(m - 1)) {
            let c = rule.apply(pool).unwrap();
            for (j, sj) in s.iter().enumerate() {
                let gap = (c.column_sum(j) - sj).abs();
                worst = worst.max(gap);
                if gap > 1e-9 + 1e-12 * sj.abs() {
                    failures.push(format!("pool {k} {rule} atom {j}: {gap:e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 10.0;
    report(1, "full allocation", ok, &format!("1000 pools x {} rules, max gap {worst:e}, {secs:.2}s", catalog(0, 1, 1).len()));
    assert!(ok, "{failures:?} in {secs}s");
}

#[test]
fn criterion_2_classification() {
    let out = bin().args(["classify", "--seed", "0", "--format", "json"]).output().unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = [
        ("order_statistics", ["violated", "holds_on_battery", "violated", "violated"]),
        ("conditional_mean", ["holds_on_battery", "violated", "holds_on_battery", "violated"]),
        ("mean_proportional", ["holds_on_battery", "violated", "holds_on_battery", "violated"]),
        ("scenario_proportional[0]", ["holds_on_battery", "violated", "holds_on_battery", "violated"]),
        ("scenario_linear[0,5,1]", ["holds_on_battery", "violated", "holds_on_battery", "violated"]),
        ("all_in_one", ["violated", "holds_on_battery", "holds_on_battery", "holds_on_battery"]),
        ("uniform", ["holds_on_battery"; 4]),
    ];
    let rows = doc["matrix"]["rows"].as_array().unwrap();
    let mut pattern_ok = out.status.success() && rows.len() == expected.len();
    for (row, (rule, cells)) in rows.iter().zip(expected) {
        pattern_ok &= row["rule"] == rule;
        for (cell, want) in row["cells"].as_array().unwrap().iter().zip(cells) {
            pattern_ok &= cell["verdict"] == want;
            if want == "violated" {
                pattern_ok &= cell["witness"].is_object();
            }
        }
    }

    // Replay every witness from the library run of the same classification.
    let battery = default_battery();
    let tol = Tolerance::default();
    let rules = classified_rules(0, 5, 1);
    let matrix = classify(&rules, &battery, &PermutationSet::default(), &tol).unwrap();
    let mut replayed = 0;
    let mut replay_ok = true;
    for (rule, row) in rules.iter().zip(&matrix.rows) {
        for (kind, cell) in CLASSIFIED_PROPERTIES.iter().zip(&row.cells) {
            if let Some(w) = &cell.witness {
                replayed += 1;
                replay_ok &= replay(rule, kind, w, &tol).unwrap();
            }
        }
    }
    let ok = pattern_ok && replay_ok && replayed == 12;
    report(2, "classification pattern", ok, &format!("7x4 pattern match {pattern_ok}, {replayed} witnesses replayed"));
    assert!(ok);
}

#[test]
fn criterion_3_uniform_theorems() {
    let mut ok = true;
    let mut notes = vec![];
    for id in [TheoremId::T1, TheoremId::T2] {
        let r = harness(id, TheoremParams::default());
        ok &= r.passed && r.only_if.iter().all(|p| p.verdict.holds());
        let others_pass: Vec<&str> = r
            .uniqueness
            .iter()
            .filter(|u| u.passes_axioms && !u.coincides)
            .map(|u| u.rule.as_str())
            .collect();
        ok &= others_pass.is_empty();
        let expected: &[&str] = match id {
            TheoremId::T1 => &["stand_alone", "order_statistics"],
            _ => &["stand_alone", "all_in_one"],
        };
        for name in expected {
            let row = r.counterexamples.iter().find(|c| c.rule == *name).unwrap();
            ok &= row.as_expected
                && row
                    .reports
                    .iter()
                    .filter(|p| p.verdict == Verdict::Violated)
                    .all(|p| p.witness.is_some());
        }
        let passers = r.uniqueness.iter().filter(|u| u.passes_axioms).count();
        notes.push(format!("{id}: {passers} catalog rule(s) pass, all equal to uniform"));
    }
    report(3, "uniform characterizations", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn criterion_4_proportional_theorems() {
    let mut ok = true;
    let mut notes = vec![];
    for q in [RiskMetric::Mean, RiskMetric::Scenario(0)] {
        let t3 = harness(TheoremId::T3, TheoremParams { q: q.clone(), ..Default::default() });
        let t4 = harness(TheoremId::T4, TheoremParams { q: q.clone(), ..Default::default() });
        let hybrid = t3.counterexamples.iter().find(|c| c.rule.starts_with("hybrid")).unwrap();
        ok &= t3.passed && t4.passed && hybrid.as_expected;
        notes.push(format!("q={q}: T3 {} T4 {}", t3.passed, t4.passed));
    }
    let battery = default_battery();
    for q in [RiskMetric::Mean, RiskMetric::Scenario(0)] {
        let a = verify_attributes(&q, battery.pools()).unwrap();
        ok &= a.normalized_and_additive();
    }
    let sd = verify_attributes(&RiskMetric::StdDev, battery.pools()).unwrap();
    let sd_witness = sd.additive.witness.clone();
    ok &= !sd.additive.observed && sd_witness.is_some();
    notes.push(format!("stddev additivity witness pool {:?}", sd_witness.map(|w| w.pool_index)));
    report(4, "q-proportional characterizations", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn criterion_5_linear_theorems() {
    let mut ok = true;
    let mut notes = vec![];
    for q2 in [BiMetric::Covariance, BiMetric::FirstVariance] {
        let params = TheoremParams { q1: RiskMetric::Mean, q2: q2.clone(), ..Default::default() };
        let t5 = harness(TheoremId::T5, params.clone());
        let t6 = harness(TheoremId::T6, params);
        let uniform_fails_7 = t6
            .counterexamples
            .iter()
            .any(|c| c.rule == "uniform" && c.as_expected);
        ok &= t5.passed && t6.passed && uniform_fails_7;
        notes.push(format!(
            "q2={q2}: axiom 6 + uniqueness {}, axiom 7 {:?}, uniform fails 7 {}{}",
            t5.passed,
            t6.only_if[0].verdict,
            uniform_fails_7,
            if t6.failures.is_empty() { String::new() } else { format!(" [{}]", t6.failures.join("; ")) }
        ));
    }
    report(5, "(q1,q2)-linear characterizations", ok, &notes.join("; "));
    assert!(ok, "{notes:?}");
}

#[test]
fn criterion_6_equivalences() {
    let battery = default_battery();
    let pairs = [
        (RuleSpec::q_proportional(RiskMetric::Constant(1.0)), RuleSpec::uniform()),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::Covariance), RuleSpec::new(RuleKind::CovarianceLinear)),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::FirstVariance), RuleSpec::new(RuleKind::VarianceLinear)),
        (RuleSpec::linear(RiskMetric::Mean, BiMetric::Lift(RiskMetric::Mean)), RuleSpec::mean_proportional()),
        (
            RuleSpec::linear(RiskMetric::Scenario(0), BiMetric::Lift(RiskMetric::Scenario(0))),
            RuleSpec::q_proportional(RiskMetric::Scenario(0)),
        ),
    ];
    let mut ok = true;
    let mut worst = 0.0f64;
    for (a, b) in &pairs {
        let r = oracle_rule_equivalence(a, b, battery.pools()).unwrap();
        worst = worst.max(r.max_deviation);
        ok &= r.max_deviation <= 1e-9 && r.pools_compared > 0;
    }
    let witness = Pool::from_parts(vec![0.5, 0.25, 0.25], vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]]).unwrap();
    let d = oracle_rule_equivalence(&RuleSpec::mean_proportional(), &RuleSpec::uniform(), &[witness])
        .unwrap()
        .max_deviation;
    ok &= d >= 0.1;
    report(6, "equivalence oracle", ok, &format!("max deviation over declared pairs {worst:e}; mean vs uniform {d}"));
    assert!(ok);
}

fn tied_pools(seed: u64, count: usize) -> Vec<Pool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=5);
            let m = rng.gen_range(2..=16);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(1..=9) as f64).collect();
            let total: f64 = raw.iter().sum();
            let losses = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..=3) as f64).collect()).collect();
            Pool::from_parts(raw.iter().map(|w| w / total).collect(), losses).unwrap()
        })
        .collect()
}

#[test]
fn criterion_7_conditional_mean_oracle() {
    let mut pools = random_pools(7, 100, (1, 6), (1, 32), 100.0).unwrap();
    pools.extend(tied_pools(7, 100));
    let cm = RuleSpec::new(RuleKind::ConditionalMean);
    let sa = RuleSpec::new(RuleKind::StandAlone);
    let mut worst = 0.0f64;
    let mut tied = 0;
    let mut distinct_exact = true;
    for pool in &pools {
        let fast = cm.apply(pool).unwrap();
        let slow = oracle_conditional_mean(pool);
        for (a, b) in fast.rows().iter().zip(slow.rows()) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        let s = pool.aggregate_values();
        let groups = riskshare::prob::level_sets(&s);
        if groups.iter().all(|g| g.len() == 1) {
            distinct_exact &= fast == sa.apply(pool).unwrap();
        } else {
            tied += 1;
        }
    }
    let ok = worst <= 1e-12 && distinct_exact && tied >= 50;
    report(7, "conditional-mean oracle", ok, &format!("200 pools ({tied} with tied S), max gap {worst:e}, distinct-S equals stand-alone {distinct_exact}"));
    assert!(ok);
}

#[test]
fn criterion_8_implication_audit() {
    let battery = default_battery();
    let tol = Tolerance::default();
    let perms = PermutationSet::default();
    let mut reports: Vec<PropertyReport> = vec![];
    let mut rules = catalog(0, 5, 1);
    rules.push(RuleSpec::new(RuleKind::CovarianceLinear).with_policy(DegeneratePolicy::Error));
    for rule in &rules {
        for kind in [PropertyKind::SourceAnonymous, PropertyKind::StronglyAggregate] {
            reports.push(check_property(rule, &kind, battery.pools(), &perms, &tol).unwrap());
        }
    }
    for id in TheoremId::ALL {
        let r = harness(id, TheoremParams::default());
        reports.extend(r.only_if);
        reports.extend(r.counterexamples.into_iter().flat_map(|c| c.reports));
    }
    let bad = riskshare::axioms::implication_violations(&reports);
    let ok = bad.is_empty();
    report(8, "implication audit", ok, &format!("{} reports, {} violation(s)", reports.len(), bad.len()));
    assert!(ok, "{bad:?}");
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = vec![];
    for run in 0..2 {
        for (cmd, extra) in [("check", vec!["--rule", "mean_prop"]), ("classify", vec![])] {
            let out = dir.path().join(format!("{cmd}{run}"));
            let status = bin()
                .arg(cmd)
                .args(&extra)
                .args(["--seed", "0", "--format", "json", "--out"])
                .arg(&out)
                .status()
                .unwrap();
            assert!(status.success());
            let name = if cmd == "check" { "report.json" } else { "classification.json" };
            outputs.push(std::fs::read(out.join(name)).unwrap());
        }
    }
    let ok = outputs[0] == outputs[2] && outputs[1] == outputs[3];
    report(9, "determinism", ok, &format!("check {} bytes, classify {} bytes", outputs[0].len(), outputs[1].len()));
    assert!(ok);
}
