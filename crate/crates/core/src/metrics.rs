//! One-dimensional risk metrics `q[X] >= 0` and two-dimensional metrics
//! `q2[X, S]`, each with declared algebraic attributes that
//! [`verify_attributes`] audits against a battery of pools.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{stable_sum, Pool, ProbSpace, RandomVariable};

/// Absolute and relative tolerance used when auditing attributes.
pub const ATTRIBUTE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Attributes {
    pub normalized: bool,
    pub additive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BiAttributes {
    /// `q2[0, S] == 0` for every `S`.
    pub zero_at_zero: bool,
    pub additive_in_first: bool,
}

type MetricFn = dyn Fn(&ProbSpace, &[f64]) -> f64 + Send + Sync;

/// A user-supplied metric registered under a name.
#[derive(Clone)]
pub struct CustomMetric {
    name: String,
    declared: Attributes,
    func: Arc<MetricFn>,
}

impl CustomMetric {
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMetric")
            .field("name", &self.name)
            .field("declared", &self.declared)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomMetric {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.declared == other.declared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RiskMetric {
    Constant(f64),
    Mean,
    Variance,
    StdDev,
    /// Realization at a fixed atom.
    Scenario(usize),
    Custom(CustomMetric),
}

impl RiskMetric {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidMetric(format!(
                "constant metric needs a finite value > 0, got {c}"
            )));
        }
        Ok(Self::Constant(c))
    }

    pub fn declared(&self) -> Attributes {
        match self {
            Self::Constant(_) => Attributes::default(),
            Self::Mean | Self::Scenario(_) => Attributes {
                normalized: true,
                additive: true,
            },
            Self::Variance | Self::StdDev => Attributes {
                normalized: true,
                additive: false,
            },
            Self::Custom(c) => c.declared,
        }
    }

    /// Check the metric can be evaluated on a space with `atoms` atoms.
    pub fn validate(&self, atoms: usize) -> Result<()> {
        match *self {
            Self::Scenario(k) if k >= atoms => Err(Error::ScenarioOutOfRange { index: k, atoms }),
            _ => Ok(()),
        }
    }

    pub fn eval_values(&self, space: &ProbSpace, values: &[f64]) -> Result<f64> {
        self.validate(space.atom_count())?;
        Ok(match self {
            Self::Constant(c) => *c,
            Self::Mean => space.expectation(values),
            Self::Variance => space.variance(values).max(0.0),
            Self::StdDev => space.variance(values).max(0.0).sqrt(),
            Self::Scenario(k) => values[*k],
            Self::Custom(c) => (c.func)(space, values),
        })
    }

    pub fn eval(&self, rv: &RandomVariable) -> Result<f64> {
        self.eval_values(rv.space(), rv.values())
    }

    /// Metric of every participant of `pool`, in row order.
    pub fn eval_pool(&self, pool: &Pool) -> Result<Vec<f64>> {
        (0..pool.participants())
            .map(|i| self.eval_values(pool.space(), pool.row(i)))
            .collect()
    }

    pub fn parse(spec: &str) -> Result<Self> {
        Self::parse_with(spec, &MetricRegistry::default())
    }

    /// Parse `mean`, `variance`, `stddev`, `const:c`, `scenario:k` or a name
    /// registered in `registry`.
    pub fn parse_with(spec: &str, registry: &MetricRegistry) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        match (head, arg) {
            ("mean", None) => Ok(Self::Mean),
            ("variance" | "var", None) => Ok(Self::Variance),
            ("stddev" | "sd", None) => Ok(Self::StdDev),
            ("const" | "constant", Some(a)) => {
                let c = a
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidMetric(format!("bad constant in {spec:?}")))?;
                Self::constant(c)
            }
            ("scenario", Some(a)) => a
                .parse::<usize>()
                .map(Self::Scenario)
                .map_err(|_| Error::InvalidMetric(format!("bad scenario index in {spec:?}"))),
            (name, None) => registry
                .get(name)
                .cloned()
                .map(Self::Custom)
                .ok_or_else(|| Error::InvalidMetric(format!("unknown metric {spec:?}"))),
            _ => Err(Error::InvalidMetric(format!("unknown metric {spec:?}"))),
        }
    }
}

impl fmt::Display for RiskMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "const:{c}"),
            Self::Mean => f.write_str("mean"),
            Self::Variance => f.write_str("variance"),
            Self::StdDev => f.write_str("stddev"),
            Self::Scenario(k) => write!(f, "scenario:{k}"),
            Self::Custom(c) => f.write_str(&c.name),
        }
    }
}

/// Named user metrics. Filled once at startup, then only read.
#[derive(Debug, Clone, Default)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, CustomMetric>,
}

impl MetricRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: &str, declared: Attributes, func: F) -> Result<()>
    where
        F: Fn(&ProbSpace, &[f64]) -> f64 + Send + Sync + 'static,
    {
        const RESERVED: [&str; 9] = [
            "mean", "variance", "var", "stddev", "sd", "const", "constant", "scenario", "cov",
        ];
        if name.is_empty() || name.contains(':') || RESERVED.contains(&name) {
            return Err(Error::InvalidMetric(format!("cannot register metric {name:?}")));
        }
        if self.metrics.contains_key(name) {
            return Err(Error::InvalidMetric(format!("metric {name:?} already registered")));
        }
        self.metrics.insert(
            name.to_string(),
            CustomMetric {
                name: name.to_string(),
                declared,
                func: Arc::new(func),
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CustomMetric> {
        self.metrics.get(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BiMetric {
    Covariance,
    /// `q2[X, S] = var(X)`.
    FirstVariance,
    /// `(X(high) - X(low)) * (S(high) - S(low))`.
    ScenarioRange { high: usize, low: usize },
    /// `q2[X, S] = q[X]`.
    Lift(RiskMetric),
}

impl BiMetric {
    pub fn declared(&self) -> BiAttributes {
        match self {
            Self::Covariance | Self::ScenarioRange { .. } => BiAttributes {
                zero_at_zero: true,
                additive_in_first: true,
            },
            Self::FirstVariance => BiAttributes {
                zero_at_zero: true,
                additive_in_first: false,
            },
            Self::Lift(q) => {
                let a = q.declared();
                BiAttributes {
                    zero_at_zero: a.normalized,
                    additive_in_first: a.additive,
                }
            }
        }
    }

    pub fn validate(&self, atoms: usize) -> Result<()> {
        match self {
            Self::ScenarioRange { high, low } => {
                for &k in [high, low] {
                    if k >= atoms {
                        return Err(Error::ScenarioOutOfRange { index: k, atoms });
                    }
                }
                Ok(())
            }
            Self::Lift(q) => q.validate(atoms),
            _ => Ok(()),
        }
    }

    pub fn eval_values(&self, space: &ProbSpace, x: &[f64], s: &[f64]) -> Result<f64> {
        self.validate(space.atom_count())?;
        Ok(match self {
            Self::Covariance => space.covariance(x, s),
            Self::FirstVariance => space.variance(x).max(0.0),
            Self::ScenarioRange { high, low } => (x[*high] - x[*low]) * (s[*high] - s[*low]),
            Self::Lift(q) => q.eval_values(space, x)?,
        })
    }

    pub fn eval(&self, x: &RandomVariable, s: &RandomVariable) -> Result<f64> {
        if x.space() != s.space() {
            return Err(Error::SpaceMismatch);
        }
        self.eval_values(x.space(), x.values(), s.values())
    }

    /// `q2[X_i, S]` for every participant of `pool`.
    pub fn eval_pool(&self, pool: &Pool, s: &[f64]) -> Result<Vec<f64>> {
        (0..pool.participants())
            .map(|i| self.eval_values(pool.space(), pool.row(i), s))
            .collect()
    }

    pub fn parse(spec: &str) -> Result<Self> {
        Self::parse_with(spec, &MetricRegistry::default())
    }

    /// Parse `cov`, `first_var`, `scenario_range:hi,lo` or `lift:<metric>`.
    pub fn parse_with(spec: &str, registry: &MetricRegistry) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        match (head, arg) {
            ("cov" | "covariance", None) => Ok(Self::Covariance),
            ("first_var" | "var" | "variance", None) => Ok(Self::FirstVariance),
            ("scenario_range", Some(a)) => {
                let idx: Vec<usize> = a
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidMetric(format!("bad indices in {spec:?}")))?;
                match idx[..] {
                    [high, low] => Ok(Self::ScenarioRange { high, low }),
                    _ => Err(Error::InvalidMetric(format!(
                        "scenario_range takes two indices, got {spec:?}"
                    ))),
                }
            }
            ("lift", Some(a)) => RiskMetric::parse_with(a, registry).map(Self::Lift),
            _ => Err(Error::InvalidMetric(format!("unknown bimetric {spec:?}"))),
        }
    }
}

impl fmt::Display for BiMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Covariance => f.write_str("cov"),
            Self::FirstVariance => f.write_str("first_var"),
            Self::ScenarioRange { high, low } => write!(f, "scenario_range:{high},{low}"),
            Self::Lift(q) => write!(f, "lift:{q}"),
        }
    }
}

pub fn eval_metric(q: &RiskMetric, rv: &RandomVariable) -> Result<f64> {
    q.eval(rv)
}

pub fn eval_bimetric(q2: &BiMetric, rv: &RandomVariable, s: &RandomVariable) -> Result<f64> {
    q2.eval(rv, s)
}

/// A failed attribute identity on one battery pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeWitness {
    pub pool_index: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeCheck {
    pub declared: bool,
    pub observed: bool,
    pub witness: Option<AttributeWitness>,
}

impl AttributeCheck {
    /// Declared and not contradicted by the battery.
    pub fn confirmed(&self) -> bool {
        self.declared && self.observed
    }

    pub fn consistent(&self) -> bool {
        self.declared == self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeReport {
    pub metric: String,
    pub pools_checked: usize,
    pub normalized: AttributeCheck,
    pub additive: AttributeCheck,
}

impl AttributeReport {
    pub fn normalized_and_additive(&self) -> bool {
        self.normalized.confirmed() && self.additive.confirmed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiAttributeReport {
    pub metric: String,
    pub pools_checked: usize,
    pub zero_at_zero: AttributeCheck,
    pub additive_in_first: AttributeCheck,
}

impl BiAttributeReport {
    pub fn zero_and_additive(&self) -> bool {
        self.zero_at_zero.confirmed() && self.additive_in_first.confirmed()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ATTRIBUTE_TOL + ATTRIBUTE_TOL * a.abs().max(b.abs())
}

fn first_failure<I>(checks: I) -> Option<AttributeWitness>
where
    I: IntoIterator<Item = (usize, f64, f64)>,
{
    checks
        .into_iter()
        .find(|&(_, l, r)| !close(l, r))
        .map(|(pool_index, lhs, rhs)| AttributeWitness {
            pool_index,
            lhs,
            rhs,
        })
}

fn attribute_check(declared: bool, witness: Option<AttributeWitness>) -> AttributeCheck {
    AttributeCheck {
        declared,
        observed: witness.is_none(),
        witness,
    }
}

/// Test `q[0] == 0` and `q[S] == sum_k q[X_k]` on every battery pool.
pub fn verify_attributes(q: &RiskMetric, battery: &[Pool]) -> Result<AttributeReport> {
    if battery.is_empty() {
        return Err(Error::InvalidBattery("attribute audit needs at least one pool".into()));
    }
    let mut zero = Vec::with_capacity(battery.len());
    let mut additive = Vec::with_capacity(battery.len());
    for (k, pool) in battery.iter().enumerate() {
        let space = pool.space();
        zero.push((k, q.eval_values(space, &vec![0.0; space.atom_count()])?, 0.0));
        let whole = q.eval_values(space, &pool.aggregate_values())?;
        let parts = stable_sum(q.eval_pool(pool)?);
        additive.push((k, whole, parts));
    }
    let declared = q.declared();
    Ok(AttributeReport {
        metric: q.to_string(),
        pools_checked: battery.len(),
        normalized: attribute_check(declared.normalized, first_failure(zero)),
        additive: attribute_check(declared.additive, first_failure(additive)),
    })
}

/// Test `q2[0, S] == 0` and `q2[S, S] == sum_k q2[X_k, S]` on every pool.
pub fn verify_bi_attributes(q2: &BiMetric, battery: &[Pool]) -> Result<BiAttributeReport> {
    if battery.is_empty() {
        return Err(Error::InvalidBattery("attribute audit needs at least one pool".into()));
    }
    let mut zero = Vec::with_capacity(battery.len());
    let mut additive = Vec::with_capacity(battery.len());
    for (k, pool) in battery.iter().enumerate() {
        let space = pool.space();
        let s = pool.aggregate_values();
        zero.push((k, q2.eval_values(space, &vec![0.0; space.atom_count()], &s)?, 0.0));
        let whole = q2.eval_values(space, &s, &s)?;
        let parts = stable_sum(q2.eval_pool(pool, &s)?);
        additive.push((k, whole, parts));
    }
    let declared = q2.declared();
    Ok(BiAttributeReport {
        metric: q2.to_string(),
        pools_checked: battery.len(),
        zero_at_zero: attribute_check(declared.zero_at_zero, first_failure(zero)),
        additive_in_first: attribute_check(declared.additive_in_first, first_failure(additive)),
    })
}
