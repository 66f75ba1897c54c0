use std::collections::BTreeMap;

use super::{PermutationSet, PropertyKind, PropertyReport, Tolerance, Verdict, Witness};
use crate::error::{Error, Result};
use crate::metrics::{verify_attributes, verify_bi_attributes, AttributeReport, BiAttributeReport, BiMetric, RiskMetric};
use crate::prob::{level_sets, same_level, ContributionMatrix, Permutation, Pool, LEVEL_TOL};
use crate::rules::RuleSpec;

struct Acc {
    rule: String,
    property: String,
    pools_checked: usize,
    pools_skipped: usize,
    comparisons: usize,
    skip_reason: Option<String>,
    witness: Option<Witness>,
}

impl Acc {
    fn new(rule: &RuleSpec, kind: &PropertyKind) -> Self {
        Self {
            rule: rule.id(),
            property: kind.label(),
            pools_checked: 0,
            pools_skipped: 0,
            comparisons: 0,
            skip_reason: None,
            witness: None,
        }
    }

    /// Contributions for `pool`, or `None` (counted as skipped) when the
    /// rule refuses a degenerate pool.
    fn apply(&mut self, rule: &RuleSpec, pool: &Pool) -> Result<Option<ContributionMatrix>> {
        match rule.apply(pool) {
            Ok(c) => {
                self.pools_checked += 1;
                Ok(Some(c))
            }
            Err(e @ Error::DegeneratePool { .. }) => {
                self.pools_skipped += 1;
                self.skip_reason.get_or_insert_with(|| e.to_string());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self, vacuous: Verdict, collisions: Option<usize>) -> PropertyReport {
        let (verdict, note) = if self.witness.is_some() {
            (Verdict::Violated, None)
        } else if self.pools_checked == 0 {
            (Verdict::Skipped, Some(self.skip_reason.clone().unwrap_or_else(|| "no pools".into())))
        } else if collisions == Some(0) {
            (Verdict::Inconclusive, Some("no cross-pool collision of matching slots".into()))
        } else if self.comparisons == 0 {
            let note = match vacuous {
                Verdict::HoldsOnBattery => "holds vacuously: nothing to compare",
                _ => "no in-scope comparison on the battery",
            };
            (vacuous, Some(note.into()))
        } else {
            (Verdict::HoldsOnBattery, None)
        };
        let note = match (note, &self.skip_reason) {
            (None, Some(r)) if verdict != Verdict::Skipped => Some(format!("{} pool(s) skipped: {r}", self.pools_skipped)),
            (n, _) => n,
        };
        PropertyReport {
            rule: self.rule,
            property: self.property,
            verdict,
            witness: self.witness,
            pools_checked: self.pools_checked,
            pools_skipped: self.pools_skipped,
            comparisons: self.comparisons,
            cross_pool_collisions: collisions,
            note,
        }
    }
}

fn violates(lhs: f64, rhs: f64, bound: f64) -> bool {
    let gap = (lhs - rhs).abs();
    gap.is_nan() || gap > bound
}

fn in_scope(v: f64, all: &[f64], tol: &Tolerance) -> bool {
    let scale = all.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.abs() > tol.bound(scale)
}

fn positive_in_scope(v: f64, all: &[f64], tol: &Tolerance) -> bool {
    v > 0.0 && in_scope(v, all, tol)
}

// ---------------------------------------------------------------------------
// Full allocation

fn allocation_instance(c: &ContributionMatrix, s: &[f64], j: usize, tol: &Tolerance) -> (f64, f64, f64) {
    (c.column_sum(j), s[j], tol.bound(s[j]))
}

pub fn check_full_allocation(rule: &RuleSpec, pools: &[Pool], tol: &Tolerance) -> Result<PropertyReport> {
    let kind = PropertyKind::FullAllocation;
    let mut acc = Acc::new(rule, &kind);
    'pools: for (k, pool) in pools.iter().enumerate() {
        let Some(c) = acc.apply(rule, pool)? else { continue };
        let s = pool.aggregate_values();
        for j in 0..pool.atoms() {
            let (lhs, rhs, bound) = allocation_instance(&c, &s, j, tol);
            acc.comparisons += 1;
            if violates(lhs, rhs, bound) {
                acc.witness = Some(simple_witness(k, pool, None, j, None, 0, lhs, rhs, bound));
                break 'pools;
            }
        }
    }
    Ok(acc.finish(Verdict::HoldsOnBattery, None))
}

#[allow(clippy::too_many_arguments)]
fn simple_witness(
    k: usize,
    pool: &Pool,
    permutation: Option<&Permutation>,
    atom: usize,
    other_atom: Option<usize>,
    participant: usize,
    lhs: f64,
    rhs: f64,
    tolerance: f64,
) -> Witness {
    Witness {
        pool_index: k,
        pool: pool.clone(),
        permutation: permutation.cloned(),
        other_pool_index: None,
        other_pool: None,
        atom,
        other_atom,
        participant,
        lhs,
        rhs,
        tolerance,
    }
}

// ---------------------------------------------------------------------------
// Permutation-based properties (axioms 1, 2, 4, 6)

#[derive(Clone, Copy)]
enum PermCheck<'a> {
    Reshuffling,
    SourceAnonymous,
    QRatio(&'a RiskMetric),
    Std(&'a RiskMetric, &'a BiMetric),
}

/// Metric values of the original pool; those of a reshuffle are a
/// permutation of them since every metric reads only its own row (and `S`).
struct PermCtx {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PermCheck<'_> {
    fn context(&self, pool: &Pool) -> Result<PermCtx> {
        Ok(match self {
            PermCheck::Reshuffling | PermCheck::SourceAnonymous => PermCtx { a: vec![], b: vec![] },
            PermCheck::QRatio(q) => PermCtx { a: q.eval_pool(pool)?, b: vec![] },
            PermCheck::Std(q1, q2) => {
                let s = pool.aggregate_values();
                PermCtx { a: q1.eval_pool(pool)?, b: q2.eval_pool(pool, &s)? }
            }
        })
    }

    /// `(lhs, rhs, bound)` for participant `i` at atom `j`, or `None` when the
    /// participant is outside the definition's scope.
    #[allow(clippy::too_many_arguments)]
    fn instance(
        &self,
        ctx: &PermCtx,
        c: &ContributionMatrix,
        cp: &ContributionMatrix,
        perm: &Permutation,
        s_j: f64,
        i: usize,
        j: usize,
        tol: &Tolerance,
    ) -> Option<(f64, f64, f64)> {
        let src = perm.source(i);
        let (lhs, rhs, scale) = match self {
            PermCheck::Reshuffling => (cp.get(i, j), c.get(src, j), s_j.abs()),
            PermCheck::SourceAnonymous => (cp.get(i, j), c.get(i, j), s_j.abs()),
            PermCheck::QRatio(_) => {
                if !positive_in_scope(ctx.a[i], &ctx.a, tol) {
                    return None;
                }
                let ratio = ctx.a[src] / ctx.a[i];
                (cp.get(i, j), ratio * c.get(i, j), s_j.abs())
            }
            PermCheck::Std(..) => {
                if !in_scope(ctx.b[i], &ctx.b, tol) {
                    return None;
                }
                let ratio = ctx.b[src] / ctx.b[i];
                let lhs = cp.get(i, j) - ctx.a[src];
                let rhs = ratio * (c.get(i, j) - ctx.a[i]);
                let scale = s_j
                    .abs()
                    .max(cp.get(i, j).abs())
                    .max(ctx.a[src].abs())
                    .max(ratio.abs() * (c.get(i, j).abs() + ctx.a[i].abs()));
                (lhs, rhs, scale)
            }
        };
        Some((lhs, rhs, tol.bound(scale.max(lhs.abs()).max(rhs.abs()))))
    }
}

fn perm_check(
    rule: &RuleSpec,
    kind: &PropertyKind,
    check: PermCheck<'_>,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let mut acc = Acc::new(rule, kind);
    'pools: for (k, pool) in pools.iter().enumerate() {
        let Some(c) = acc.apply(rule, pool)? else { continue };
        let ctx = check.context(pool)?;
        let s = pool.aggregate_values();
        for perm in perms.for_size(pool.participants()) {
            let cp = match rule.apply(&pool.reshuffle(&perm)?) {
                Ok(cp) => cp,
                Err(Error::DegeneratePool { .. }) => continue,
                Err(e) => return Err(e),
            };
            for i in 0..pool.participants() {
                for j in 0..pool.atoms() {
                    let Some((lhs, rhs, bound)) = check.instance(&ctx, &c, &cp, &perm, s[j], i, j, tol) else {
                        continue;
                    };
                    acc.comparisons += 1;
                    if violates(lhs, rhs, bound) {
                        acc.witness = Some(simple_witness(k, pool, Some(&perm), j, None, i, lhs, rhs, bound));
                        break 'pools;
                    }
                }
            }
        }
    }
    Ok(acc.finish(Verdict::Inconclusive, None))
}

/// Axiom 1: `C_i[X^pi] == C_{pi(i)}[X]`.
pub fn check_reshuffling(
    rule: &RuleSpec,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    perm_check(rule, &PropertyKind::Reshuffling, PermCheck::Reshuffling, pools, perms, tol)
}

/// Axiom 2: `C_i[X^pi] == C_i[X]`.
pub fn check_source_anonymous(
    rule: &RuleSpec,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    perm_check(rule, &PropertyKind::SourceAnonymous, PermCheck::SourceAnonymous, pools, perms, tol)
}

/// Axiom 4, at participants with `q[X_i] > 0`.
pub fn check_source_anonymous_q_ratio(
    rule: &RuleSpec,
    q: &RiskMetric,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let kind = PropertyKind::SourceAnonymousQRatio(q.clone());
    perm_check(rule, &kind, PermCheck::QRatio(q), pools, perms, tol)
}

/// Axiom 6, at participants with `q2[X_i, S] != 0`.
pub fn check_source_anonymous_std(
    rule: &RuleSpec,
    q1: &RiskMetric,
    q2: &BiMetric,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let kind = PropertyKind::SourceAnonymousStd(q1.clone(), q2.clone());
    perm_check(rule, &kind, PermCheck::Std(q1, q2), pools, perms, tol)
}

// ---------------------------------------------------------------------------
// Aggregate contributions

fn aggregate_instance(c: &ContributionMatrix, s: &[f64], i: usize, j: usize, first: usize, tol: &Tolerance) -> (f64, f64, f64) {
    let (lhs, rhs) = (c.get(i, j), c.get(i, first));
    (lhs, rhs, tol.bound(s[j].abs().max(lhs.abs()).max(rhs.abs())))
}

/// Contributions constant on every level set of `S`.
pub fn check_aggregate(rule: &RuleSpec, pools: &[Pool], tol: &Tolerance) -> Result<PropertyReport> {
    let mut acc = Acc::new(rule, &PropertyKind::Aggregate);
    'pools: for (k, pool) in pools.iter().enumerate() {
        let Some(c) = acc.apply(rule, pool)? else { continue };
        let s = pool.aggregate_values();
        for group in level_sets(&s) {
            let first = group[0];
            for &j in &group[1..] {
                for i in 0..pool.participants() {
                    let (lhs, rhs, bound) = aggregate_instance(&c, &s, i, j, first, tol);
                    acc.comparisons += 1;
                    if violates(lhs, rhs, bound) {
                        acc.witness = Some(simple_witness(k, pool, None, j, Some(first), i, lhs, rhs, bound));
                        break 'pools;
                    }
                }
            }
        }
    }
    Ok(acc.finish(Verdict::HoldsOnBattery, None))
}

// ---------------------------------------------------------------------------
// Strongly aggregate properties (axioms 3, 5, 7)

#[derive(Clone, Copy)]
enum StrongCheck<'a> {
    Plain,
    QRatio(&'a RiskMetric),
    Std(&'a RiskMetric, &'a BiMetric),
}

struct StrongCtx {
    s: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    key_tail: Vec<f64>,
}

/// One `(pool, atom)` slot: the arguments of `h` and, per seat, the value
/// `h_i` must take there with the scale used for its tolerance.
struct Slot {
    pool: usize,
    atom: usize,
    key: Vec<f64>,
    values: Vec<Option<(f64, f64)>>,
}

impl StrongCheck<'_> {
    fn context(&self, pool: &Pool) -> Result<StrongCtx> {
        let s = pool.aggregate_values();
        let space = pool.space();
        Ok(match self {
            StrongCheck::Plain => StrongCtx { s, a: vec![], b: vec![], key_tail: vec![] },
            StrongCheck::QRatio(q) => {
                let qs = q.eval_values(space, &s)?;
                StrongCtx { a: q.eval_pool(pool)?, b: vec![], key_tail: vec![qs], s }
            }
            StrongCheck::Std(q1, q2) => {
                let tail = vec![q1.eval_values(space, &s)?, q2.eval_values(space, &s, &s)?];
                StrongCtx { a: q1.eval_pool(pool)?, b: q2.eval_pool(pool, &s)?, key_tail: tail, s }
            }
        })
    }

    /// Value of `h_i` implied at `(i, j)`, or `None` outside scope.
    fn value(&self, ctx: &StrongCtx, c: &ContributionMatrix, i: usize, j: usize, tol: &Tolerance) -> Option<(f64, f64)> {
        let cij = c.get(i, j);
        let sj = ctx.s[j].abs();
        match self {
            StrongCheck::Plain => Some((cij, cij.abs().max(sj))),
            StrongCheck::QRatio(_) => {
                if !positive_in_scope(ctx.a[i], &ctx.a, tol) {
                    return None;
                }
                let v = cij / ctx.a[i];
                Some((v, v.abs().max(sj / ctx.a[i].abs())))
            }
            StrongCheck::Std(..) => {
                if !in_scope(ctx.b[i], &ctx.b, tol) {
                    return None;
                }
                let v = (cij - ctx.a[i]) / ctx.b[i];
                Some((v, v.abs().max((cij.abs() + ctx.a[i].abs() + sj) / ctx.b[i].abs())))
            }
        }
    }

    /// Out-of-scope seats must still carry the value the representation
    /// forces on them: `0` when `q[X_i]=0`, `q1[X_i]` when `q2[X_i,S]=0`.
    fn forced(&self, ctx: &StrongCtx, c: &ContributionMatrix, i: usize, j: usize, tol: &Tolerance) -> Option<(f64, f64, f64)> {
        let cij = c.get(i, j);
        let sj = ctx.s[j].abs();
        let (lhs, rhs, scale) = match self {
            StrongCheck::Plain => return None,
            StrongCheck::QRatio(_) => {
                if positive_in_scope(ctx.a[i], &ctx.a, tol) {
                    return None;
                }
                (cij, 0.0, sj)
            }
            StrongCheck::Std(..) => {
                if in_scope(ctx.b[i], &ctx.b, tol) {
                    return None;
                }
                (cij, ctx.a[i], sj.max(ctx.a[i].abs()))
            }
        };
        Some((lhs, rhs, tol.bound(scale.max(lhs.abs()))))
    }

    fn slot(&self, ctx: &StrongCtx, c: &ContributionMatrix, pool: usize, j: usize, tol: &Tolerance) -> Slot {
        let mut key = vec![ctx.s[j]];
        key.extend_from_slice(&ctx.key_tail);
        Slot {
            pool,
            atom: j,
            key,
            values: (0..c.participants()).map(|i| self.value(ctx, c, i, j, tol)).collect(),
        }
    }
}

fn keys_match(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| same_level(*x, *y))
}

fn slot_bound(a: (f64, f64), b: (f64, f64), tol: &Tolerance) -> f64 {
    tol.bound(a.1.max(b.1).max(a.0.abs()).max(b.0.abs()))
}

fn strong_check(
    rule: &RuleSpec,
    kind: &PropertyKind,
    check: StrongCheck<'_>,
    pools: &[Pool],
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let mut acc = Acc::new(rule, kind);
    // Seats are compared only between pools of the same size.
    let mut slots: BTreeMap<usize, Vec<Slot>> = BTreeMap::new();
    for (k, pool) in pools.iter().enumerate() {
        let Some(c) = acc.apply(rule, pool)? else { continue };
        let ctx = check.context(pool)?;
        for j in 0..pool.atoms() {
            for i in 0..pool.participants() {
                if let Some((lhs, rhs, bound)) = check.forced(&ctx, &c, i, j, tol) {
                    acc.comparisons += 1;
                    if acc.witness.is_none() && violates(lhs, rhs, bound) {
                        acc.witness = Some(simple_witness(k, pool, None, j, None, i, lhs, rhs, bound));
                    }
                }
            }
            slots.entry(pool.participants()).or_default().push(check.slot(&ctx, &c, k, j, tol));
        }
    }

    let mut collisions = 0usize;
    'sizes: for group in slots.values_mut() {
        if acc.witness.is_some() {
            break;
        }
        group.sort_by(|x, y| {
            x.key[0]
                .total_cmp(&y.key[0])
                .then(x.pool.cmp(&y.pool))
                .then(x.atom.cmp(&y.atom))
        });
        for a in 0..group.len() {
            for b in a + 1..group.len() {
                let (sa, sb) = (&group[a], &group[b]);
                if sb.key[0] - sa.key[0] > LEVEL_TOL * sa.key[0].abs().max(1.0) {
                    break;
                }
                if !keys_match(&sa.key, &sb.key) {
                    continue;
                }
                if sa.pool != sb.pool {
                    collisions += 1;
                }
                for (i, (va, vb)) in sa.values.iter().zip(&sb.values).enumerate() {
                    let (Some(va), Some(vb)) = (va, vb) else { continue };
                    let bound = slot_bound(*va, *vb, tol);
                    acc.comparisons += 1;
                    if violates(va.0, vb.0, bound) {
                        acc.witness = Some(Witness {
                            pool_index: sa.pool,
                            pool: pools[sa.pool].clone(),
                            permutation: None,
                            other_pool_index: Some(sb.pool),
                            other_pool: Some(pools[sb.pool].clone()),
                            atom: sa.atom,
                            other_atom: Some(sb.atom),
                            participant: i,
                            lhs: va.0,
                            rhs: vb.0,
                            tolerance: bound,
                        });
                        break 'sizes;
                    }
                }
            }
        }
    }
    Ok(acc.finish(Verdict::Inconclusive, Some(collisions)))
}

/// Axiom 3: one `h` with `C_i = h_i(S)` across every pool of the battery.
pub fn check_strongly_aggregate(rule: &RuleSpec, pools: &[Pool], tol: &Tolerance) -> Result<PropertyReport> {
    strong_check(rule, &PropertyKind::StronglyAggregate, StrongCheck::Plain, pools, tol)
}

/// Axiom 5: `C_i = q[X_i] h_i(S, q[S])`. Refused unless `audit` confirms
/// that `q` is normalized and additive.
pub fn check_strongly_aggregate_q_ratio(
    rule: &RuleSpec,
    q: &RiskMetric,
    audit: &AttributeReport,
    pools: &[Pool],
    tol: &Tolerance,
) -> Result<PropertyReport> {
    if audit.metric != q.to_string() || !audit.normalized_and_additive() {
        return Err(Error::UnauditedMetric {
            metric: q.to_string(),
            required: "normalized and additive".into(),
        });
    }
    let kind = PropertyKind::StronglyAggregateQRatio(q.clone());
    strong_check(rule, &kind, StrongCheck::QRatio(q), pools, tol)
}

/// Axiom 7: `C_i = q1[X_i] + q2[X_i, S] h_i(S, q1[S], q2[S, S])`. Refused
/// unless the audits confirm `q1` normalized and additive and `q2`
/// zero at zero and additive in its first argument.
#[allow(clippy::too_many_arguments)]
pub fn check_strongly_aggregate_std(
    rule: &RuleSpec,
    q1: &RiskMetric,
    q2: &BiMetric,
    q1_audit: &AttributeReport,
    q2_audit: &BiAttributeReport,
    pools: &[Pool],
    tol: &Tolerance,
) -> Result<PropertyReport> {
    if q1_audit.metric != q1.to_string() || !q1_audit.normalized_and_additive() {
        return Err(Error::UnauditedMetric {
            metric: q1.to_string(),
            required: "normalized and additive".into(),
        });
    }
    if q2_audit.metric != q2.to_string() || !q2_audit.zero_and_additive() {
        return Err(Error::UnauditedMetric {
            metric: q2.to_string(),
            required: "zero at zero and additive in the first argument".into(),
        });
    }
    let kind = PropertyKind::StronglyAggregateStd(q1.clone(), q2.clone());
    strong_check(rule, &kind, StrongCheck::Std(q1, q2), pools, tol)
}

/// Axiom 7 without the metric audit; used to study rules whose metrics do
/// not meet the hypotheses.
#[doc(hidden)]
pub fn check_strongly_aggregate_std_unaudited(
    rule: &RuleSpec,
    q1: &RiskMetric,
    q2: &BiMetric,
    pools: &[Pool],
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let kind = PropertyKind::StronglyAggregateStd(q1.clone(), q2.clone());
    strong_check(rule, &kind, StrongCheck::Std(q1, q2), pools, tol)
}

fn refused(rule: &RuleSpec, kind: &PropertyKind, err: Error) -> PropertyReport {
    PropertyReport {
        rule: rule.id(),
        property: kind.label(),
        verdict: Verdict::Refused,
        witness: None,
        pools_checked: 0,
        pools_skipped: 0,
        comparisons: 0,
        cross_pool_collisions: None,
        note: Some(err.to_string()),
    }
}

/// Run any property; the strongly aggregate ratio kinds audit their metrics
/// on `pools` first and report `Refused` when the audit fails.
pub fn check_property(
    rule: &RuleSpec,
    kind: &PropertyKind,
    pools: &[Pool],
    perms: &PermutationSet,
    tol: &Tolerance,
) -> Result<PropertyReport> {
    let outcome = match kind {
        PropertyKind::FullAllocation => check_full_allocation(rule, pools, tol),
        PropertyKind::Reshuffling => check_reshuffling(rule, pools, perms, tol),
        PropertyKind::SourceAnonymous => check_source_anonymous(rule, pools, perms, tol),
        PropertyKind::Aggregate => check_aggregate(rule, pools, tol),
        PropertyKind::StronglyAggregate => check_strongly_aggregate(rule, pools, tol),
        PropertyKind::SourceAnonymousQRatio(q) => check_source_anonymous_q_ratio(rule, q, pools, perms, tol),
        PropertyKind::StronglyAggregateQRatio(q) => {
            let audit = verify_attributes(q, pools)?;
            check_strongly_aggregate_q_ratio(rule, q, &audit, pools, tol)
        }
        PropertyKind::SourceAnonymousStd(q1, q2) => check_source_anonymous_std(rule, q1, q2, pools, perms, tol),
        PropertyKind::StronglyAggregateStd(q1, q2) => {
            let a1 = verify_attributes(q1, pools)?;
            let a2 = verify_bi_attributes(q2, pools)?;
            check_strongly_aggregate_std(rule, q1, q2, &a1, &a2, pools, tol)
        }
    };
    match outcome {
        Err(e @ Error::UnauditedMetric { .. }) => Ok(refused(rule, kind, e)),
        other => other,
    }
}

/// Recompute a witness from its embedded pools alone. Returns `true` when
/// the recomputed sides are bit-identical to the recorded ones and still
/// violate the recorded tolerance.
pub fn replay(rule: &RuleSpec, kind: &PropertyKind, w: &Witness, tol: &Tolerance) -> Result<bool> {
    let c = rule.apply(&w.pool)?;
    let s = w.pool.aggregate_values();
    let (i, j) = (w.participant, w.atom);
    let perm_kind = match kind {
        PropertyKind::Reshuffling => Some(PermCheck::Reshuffling),
        PropertyKind::SourceAnonymous => Some(PermCheck::SourceAnonymous),
        PropertyKind::SourceAnonymousQRatio(q) => Some(PermCheck::QRatio(q)),
        PropertyKind::SourceAnonymousStd(q1, q2) => Some(PermCheck::Std(q1, q2)),
        _ => None,
    };
    let strong_kind = match kind {
        PropertyKind::StronglyAggregate => Some(StrongCheck::Plain),
        PropertyKind::StronglyAggregateQRatio(q) => Some(StrongCheck::QRatio(q)),
        PropertyKind::StronglyAggregateStd(q1, q2) => Some(StrongCheck::Std(q1, q2)),
        _ => None,
    };
    let sides = if let Some(check) = perm_kind {
        let perm = w
            .permutation
            .as_ref()
            .ok_or_else(|| Error::InvalidPermutation("witness carries no permutation".into()))?;
        let cp = rule.apply(&w.pool.reshuffle(perm)?)?;
        let ctx = check.context(&w.pool)?;
        check.instance(&ctx, &c, &cp, perm, s[j], i, j, tol)
    } else if let Some(check) = strong_kind {
        let ctx = check.context(&w.pool)?;
        match (&w.other_pool, w.other_atom) {
            (Some(other), Some(b)) => {
                let co = rule.apply(other)?;
                let octx = check.context(other)?;
                match (check.value(&ctx, &c, i, j, tol), check.value(&octx, &co, i, b, tol)) {
                    (Some(va), Some(vb)) => Some((va.0, vb.0, slot_bound(va, vb, tol))),
                    _ => None,
                }
            }
            _ => check.forced(&ctx, &c, i, j, tol),
        }
    } else {
        match kind {
            PropertyKind::FullAllocation => Some(allocation_instance(&c, &s, j, tol)),
            PropertyKind::Aggregate => {
                let first = w
                    .other_atom
                    .ok_or_else(|| Error::InvalidBattery("aggregate witness carries no second atom".into()))?;
                Some(aggregate_instance(&c, &s, i, j, first, tol))
            }
            _ => None,
        }
    };
    Ok(match sides {
        Some((lhs, rhs, bound)) => {
            lhs.to_bits() == w.lhs.to_bits()
                && rhs.to_bits() == w.rhs.to_bits()
                && bound.to_bits() == w.tolerance.to_bits()
                && violates(lhs, rhs, bound)
        }
        None => false,
    })
}
