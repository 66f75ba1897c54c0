//! Run configuration: a TOML or JSON document, overridden by CLI flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use riskshare::axioms::{BatteryParams, PermutationSet, PropertyKind, TheoremId, TheoremParams, Tolerance};
use riskshare::rules::{DegeneratePolicy, RuleKind};
use riskshare::{BiMetric, RiskMetric, RuleSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Md,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    Error,
    Uniform,
}

impl From<Degenerate> for DegeneratePolicy {
    fn from(d: Degenerate) -> Self {
        match d {
            Degenerate::Error => DegeneratePolicy::Error,
            Degenerate::Uniform => DegeneratePolicy::UniformFallback,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub atoms: Option<usize>,
    pub random_pools: Option<usize>,
    pub min_participants: Option<usize>,
    pub max_participants: Option<usize>,
    pub max_loss: Option<u32>,
    pub families: Option<usize>,
    pub family_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rule: Option<String>,
    pub q: Option<String>,
    pub q1: Option<String>,
    pub q2: Option<String>,
    pub omegas: Option<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
    pub degenerate: Option<Degenerate>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub seed: Option<u64>,
    pub battery: Option<BatteryConfig>,
    pub properties: Option<Vec<String>>,
    pub rules: Option<Vec<String>>,
    pub theorems: Option<Vec<String>>,
    pub pool: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Fill every field set in `over`, keeping ours otherwise.
    pub fn overlay(mut self, over: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(rule, q, q1, q2, omegas, weights, degenerate, tol_abs, tol_rel, seed, battery, properties, rules, theorems, pool, out, format);
        self
    }

    pub fn tolerance(&self) -> CliResult<Tolerance> {
        let d = Tolerance::default();
        Tolerance::new(self.tol_abs.unwrap_or(d.abs), self.tol_rel.unwrap_or(d.rel)).map_err(CliError::from)
    }

    pub fn policy(&self) -> DegeneratePolicy {
        self.degenerate.map(Into::into).unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn perms(&self) -> PermutationSet {
        PermutationSet::with_seed(self.seed())
    }

    pub fn battery_params(&self) -> CliResult<BatteryParams> {
        let d = BatteryParams::default();
        let b = self.battery.clone().unwrap_or_default();
        Ok(BatteryParams {
            atoms: b.atoms.unwrap_or(d.atoms),
            random_pools: b.random_pools.unwrap_or(d.random_pools),
            min_participants: b.min_participants.unwrap_or(d.min_participants),
            max_participants: b.max_participants.unwrap_or(d.max_participants),
            max_loss: b.max_loss.unwrap_or(d.max_loss),
            families: b.families.unwrap_or(d.families),
            family_size: b.family_size.unwrap_or(d.family_size),
        })
    }

    pub fn q(&self) -> CliResult<RiskMetric> {
        metric(self.q.as_deref(), "q")
    }

    pub fn q1(&self) -> CliResult<RiskMetric> {
        metric(self.q1.as_deref(), "q1")
    }

    pub fn q2(&self) -> CliResult<BiMetric> {
        match self.q2.as_deref() {
            None => Ok(BiMetric::Covariance),
            Some(s) => BiMetric::parse(s).map_err(|e| CliError::Input(format!("q2: {e}"))),
        }
    }

    /// `(typical, high, low)` scenario indices, defaulting to
    /// `(0, m-1, min(1, m-1))`.
    pub fn omegas(&self, atoms: usize) -> CliResult<(usize, usize, usize)> {
        let last = atoms.saturating_sub(1);
        let o = self.omegas.clone().unwrap_or_default();
        let (t, h, l) = match o.as_slice() {
            [] => (0, last, 1.min(last)),
            [t] => (*t, last, 1.min(last)),
            [t, h, l] => (*t, *h, *l),
            _ => return Err(CliError::Input("omegas takes one index or three (typical, high, low)".into())),
        };
        for k in [t, h, l] {
            if k >= atoms {
                return Err(CliError::Input(format!("scenario index {k} out of range for {atoms} atoms")));
            }
        }
        Ok((t, h, l))
    }

    pub fn theorem_params(&self, atoms: usize) -> CliResult<TheoremParams> {
        let (typical, high, low) = self.omegas(atoms)?;
        Ok(TheoremParams {
            q: self.q()?,
            q1: self.q1()?,
            q2: self.q2()?,
            typical,
            high: Some(high),
            low,
        })
    }

    /// The rule named by `rule`, checked against the pool shape.
    pub fn rule(&self, participants: usize, atoms: usize) -> CliResult<RuleSpec> {
        let name = self
            .rule
            .as_deref()
            .ok_or_else(|| CliError::Input("no rule given (use --rule or 'rule' in the config)".into()))?;
        let rule = self.named_rule(name, participants, atoms)?;
        rule.validate(participants, atoms).map_err(|e| CliError::Input(e.to_string()))?;
        Ok(rule)
    }

    pub fn named_rule(&self, name: &str, participants: usize, atoms: usize) -> CliResult<RuleSpec> {
        let (t, h, l) = self.omegas(atoms)?;
        let kind = match name.trim() {
            "uniform" => RuleKind::Uniform,
            "mean_prop" | "mean_proportional" => RuleKind::QProportional(RiskMetric::Mean),
            "q_prop" | "q_proportional" => RuleKind::QProportional(self.q()?),
            "weighted_q_prop" | "weighted_q_proportional" => RuleKind::WeightedQProportional {
                q: self.q()?,
                weights: self
                    .weights
                    .clone()
                    .unwrap_or_else(|| (1..=participants).map(|i| i as f64).collect()),
            },
            "q1q2_lin" | "q1q2_linear" => RuleKind::LinearQ1Q2 { q1: self.q1()?, q2: self.q2()? },
            "scen_prop" | "scenario_proportional" => RuleKind::ScenarioProportional { typical: t },
            "scen_lin" | "scenario_linear" => RuleKind::ScenarioLinear { typical: t, high: h, low: l },
            "cov_lin" | "covariance_linear" => RuleKind::CovarianceLinear,
            "var_lin" | "variance_linear" => RuleKind::VarianceLinear,
            "cond_mean" | "conditional_mean" => RuleKind::ConditionalMean,
            "order_stats" | "order_statistics" => RuleKind::OrderStatistics,
            "all_in_one" => RuleKind::AllInOne,
            "stand_alone" => RuleKind::StandAlone,
            "hybrid" => RuleKind::Hybrid(self.q()?),
            other => return Err(CliError::Input(format!("unknown rule '{other}'"))),
        };
        Ok(RuleSpec::new(kind).with_policy(self.policy()))
    }

    pub fn properties(&self) -> CliResult<Vec<PropertyKind>> {
        let (q, q1, q2) = (self.q()?, self.q1()?, self.q2()?);
        match &self.properties {
            None => Ok(PropertyKind::all(&q, &q1, &q2)),
            Some(names) if names.iter().any(|n| n == "all") => Ok(PropertyKind::all(&q, &q1, &q2)),
            Some(names) => names
                .iter()
                .map(|n| PropertyKind::parse(n, &q, &q1, &q2).map_err(CliError::from))
                .collect(),
        }
    }

    pub fn theorems(&self) -> CliResult<Vec<TheoremId>> {
        match &self.theorems {
            None => Ok(TheoremId::ALL.to_vec()),
            Some(names) => names.iter().map(|n| n.parse().map_err(CliError::from)).collect(),
        }
    }
}

fn metric(spec: Option<&str>, what: &str) -> CliResult<RiskMetric> {
    match spec {
        None => Ok(RiskMetric::Mean),
        Some(s) => RiskMetric::parse(s).map_err(|e| CliError::Input(format!("{what}: {e}"))),
    }
}

/// Split `"1,2,3"` into parsed items.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::Input(format!("{what}: cannot parse '{p}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let e = toml::from_str::<RunConfig>("rule = \"uniform\"\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"));
        assert!(serde_json::from_str::<RunConfig>(r#"{"battery": {"atomz": 3}}"#).is_err());
    }

    #[test]
    fn builds_rules() {
        let cfg: RunConfig = toml::from_str("rule = \"scen_lin\"\nomegas = [0, 2, 1]\ndegenerate = \"uniform\"").unwrap();
        let r = cfg.rule(2, 3).unwrap();
        assert_eq!(r.id(), "scenario_linear[0,2,1]");
        assert_eq!(r.degenerate, DegeneratePolicy::UniformFallback);
        assert!(cfg.rule(2, 2).is_err());

        let cfg: RunConfig = serde_json::from_str(r#"{"rule": "q1q2_lin", "q1": "mean", "q2": "lift:mean"}"#).unwrap();
        assert_eq!(cfg.rule(2, 3).unwrap().id(), "q1q2_linear[mean;lift:mean]");
        let cfg = RunConfig { rule: Some("nope".into()), ..Default::default() };
        assert!(cfg.rule(2, 3).is_err());
    }

    #[test]
    fn overlay_prefers_flags() {
        let base = RunConfig { rule: Some("uniform".into()), seed: Some(4), ..Default::default() };
        let over = RunConfig { seed: Some(9), ..Default::default() };
        let cfg = base.overlay(over);
        assert_eq!((cfg.rule.as_deref(), cfg.seed), (Some("uniform"), Some(9)));
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("0, 2,1", "omegas").unwrap(), vec![0, 2, 1]);
        assert!(parse_list::<usize>("0,x", "omegas").is_err());
    }
}
