//! Finite probability spaces, random variables as realization vectors, pools
//! of losses and their reshuffles.
//!
//! Every random variable is a vector of realizations indexed by atom. A
//! [`Pool`] is an `n x m` loss matrix (participants by atoms) bound to a
//! shared [`ProbSpace`]. Aggregates are computed with an order-independent
//! summation so that reshuffling a pool leaves its aggregate bit-identical.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a [`ProbSpace`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Relative tolerance used to decide whether two aggregate realizations
/// belong to the same level set of `S`.
pub const LEVEL_TOL: f64 = 1e-9;

/// Sum that does not depend on the order of its terms.
///
/// Terms are sorted with `total_cmp` before a left-to-right summation, so any
/// permutation of the same multiset produces the same bits.
pub fn stable_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut v: Vec<f64> = terms.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Whether two aggregate realizations are treated as the same value.
pub fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_TOL * a.abs().min(b.abs()).max(1.0)
}

/// Partition atom indices into level sets of `values`.
///
/// Atoms are sorted by value and split wherever two consecutive values are
/// not [`same_level`]. Each returned group is sorted by atom index and the
/// groups are ordered by their smallest value.
pub fn level_sets(values: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut prev: Option<f64> = None;
    for j in order {
        let v = values[j];
        match (prev, groups.last_mut()) {
            (Some(p), Some(g)) if same_level(p, v) => g.push(j),
            _ => groups.push(vec![j]),
        }
        prev = Some(v);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// A finite probability space: `m` atoms with strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSpace {
    weights: Vec<f64>,
}

impl ProbSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return Err(Error::InvalidSpace(format!(
                "weight of atom {j} is {w}, expected a finite value > 0"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidSpace(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// `m` equally likely atoms.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probability-weighted mean of a realization vector on this space.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// Covariance of two realization vectors on this space.
    ///
    /// A constant argument yields exactly zero, so `var(S) == 0.0` is a
    /// reliable test for a deterministic aggregate.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.weights.len());
        debug_assert_eq!(b.len(), self.weights.len());
        if is_constant(a) || is_constant(b) {
            return 0.0;
        }
        let ma = self.expectation(a);
        let mb = self.expectation(b);
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(p, (x, y))| p * (x - ma) * (y - mb))
            .sum()
    }

    pub fn variance(&self, a: &[f64]) -> f64 {
        self.covariance(a, a)
    }

    fn same_as(&self, other: &ProbSpace) -> bool {
        std::ptr::eq(self, other) || self.weights == other.weights
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// A random variable on a finite space, stored as its realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    space: Arc<ProbSpace>,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(space: Arc<ProbSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.atom_count() {
            return Err(Error::InvalidPool(format!(
                "random variable has {} realizations, space has {} atoms",
                values.len(),
                space.atom_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidPool(format!("non-finite realization {v}")));
        }
        Ok(Self { space, values })
    }

    pub fn constant(space: Arc<ProbSpace>, c: f64) -> Self {
        let m = space.atom_count();
        Self {
            space,
            values: vec![c; m],
        }
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, atom: usize) -> f64 {
        self.values[atom]
    }
}

pub fn expectation(rv: &RandomVariable) -> f64 {
    rv.space.expectation(&rv.values)
}

pub fn covariance(a: &RandomVariable, b: &RandomVariable) -> Result<f64> {
    if !a.space.same_as(&b.space) {
        return Err(Error::SpaceMismatch);
    }
    Ok(a.space.covariance(&a.values, &b.values))
}

pub fn variance(a: &RandomVariable) -> f64 {
    a.space.variance(&a.values)
}

/// A bijection of `{0, .., n-1}`; position `i` of a reshuffled pool takes
/// the loss of source participant `mapping[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &k in &mapping {
            if k >= n || seen[k] {
                return Err(Error::InvalidPermutation(format!(
                    "{mapping:?} is not a bijection of 0..{n}"
                )));
            }
            seen[k] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    /// Transposition of `i` and `j`.
    pub fn swap(n: usize, i: usize, j: usize) -> Result<Self> {
        let mut mapping: Vec<usize> = (0..n).collect();
        if i >= n || j >= n {
            return Err(Error::InvalidPermutation(format!(
                "swap ({i}, {j}) out of range for n = {n}"
            )));
        }
        mapping.swap(i, j);
        Ok(Self { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &k)| i == k)
    }

    /// Source index feeding position `i`.
    pub fn source(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &k) in self.mapping.iter().enumerate() {
            inv[k] = i;
        }
        Self { mapping: inv }
    }
}

/// `n` participants' losses on a shared finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    space: Arc<ProbSpace>,
    losses: Vec<Vec<f64>>,
}

impl Pool {
    pub fn new(space: Arc<ProbSpace>, losses: Vec<Vec<f64>>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::InvalidPool("a pool needs at least one participant".into()));
        }
        let m = space.atom_count();
        for (i, row) in losses.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidPool(format!(
                    "participant {i} has {} realizations, space has {m} atoms",
                    row.len()
                )));
            }
            if let Some((j, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(Error::InvalidPool(format!(
                    "loss of participant {i} at atom {j} is {v}, expected a finite value >= 0"
                )));
            }
        }
        Ok(Self { space, losses })
    }

    /// Build a pool on a freshly allocated space.
    pub fn from_parts(weights: Vec<f64>, losses: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Arc::new(ProbSpace::new(weights)?), losses)
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn participants(&self) -> usize {
        self.losses.len()
    }

    pub fn atoms(&self) -> usize {
        self.space.atom_count()
    }

    pub fn losses(&self) -> &[Vec<f64>] {
        &self.losses
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.losses[i]
    }

    pub fn member(&self, i: usize) -> RandomVariable {
        RandomVariable {
            space: Arc::clone(&self.space),
            values: self.losses[i].clone(),
        }
    }

    /// Aggregate loss `S`, one realization per atom.
    pub fn aggregate_values(&self) -> Vec<f64> {
        (0..self.atoms())
            .map(|j| stable_sum(self.losses.iter().map(|row| row[j])))
            .collect()
    }

    pub fn aggregate(&self) -> RandomVariable {
        RandomVariable {
            space: Arc::clone(&self.space),
            values: self.aggregate_values(),
        }
    }

    pub fn reshuffle(&self, perm: &Permutation) -> Result<Pool> {
        if perm.len() != self.participants() {
            return Err(Error::InvalidPermutation(format!(
                "permutation of length {} applied to a pool of {} participants",
                perm.len(),
                self.participants()
            )));
        }
        Ok(Pool {
            space: Arc::clone(&self.space),
            losses: perm
                .mapping()
                .iter()
                .map(|&k| self.losses[k].clone())
                .collect(),
        })
    }
}

impl Serialize for Pool {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("Pool", 2)?;
        st.serialize_field("weights", self.space.weights())?;
        st.serialize_field("losses", &self.losses)?;
        st.end()
    }
}

pub fn aggregate(pool: &Pool) -> RandomVariable {
    pool.aggregate()
}

pub fn reshuffle(pool: &Pool, perm: &Permutation) -> Result<Pool> {
    pool.reshuffle(perm)
}

/// Contributions `C_i(omega_j)`, one row per participant. Entries may be
/// negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    values: Vec<Vec<f64>>,
}

impl ContributionMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }

    pub fn participants(&self) -> usize {
        self.values.len()
    }

    pub fn atoms(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        stable_sum(self.values.iter().map(|row| row[j]))
    }

    /// `sum_i C_i(omega_j) - S(omega_j)` for every atom.
    pub fn allocation_residuals(&self, pool: &Pool) -> Vec<f64> {
        pool.aggregate_values()
            .iter()
            .enumerate()
            .map(|(j, s)| self.column_sum(j) - s)
            .collect()
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space3() -> Arc<ProbSpace> {
        Arc::new(ProbSpace::new(vec![0.5, 0.25, 0.25]).unwrap())
    }

    fn pool_a() -> Pool {
        Pool::new(space3(), vec![vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]]).unwrap()
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(ProbSpace::new(vec![]).is_err());
        assert!(ProbSpace::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(ProbSpace::new(vec![0.5, 0.6]).is_err());
        assert!(ProbSpace::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbSpace::new(vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn rejects_bad_pools() {
        let s = space3();
        assert!(Pool::new(s.clone(), vec![]).is_err());
        assert!(Pool::new(s.clone(), vec![vec![1.0, 2.0]]).is_err());
        assert!(Pool::new(s, vec![vec![1.0, -2.0, 0.0]]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(pool_a().aggregate_values(), vec![2.0, 6.0, 10.0]);
        let zero = Pool::from_parts(vec![0.5, 0.5], vec![vec![0.0; 2]; 2]).unwrap();
        assert_eq!(zero.aggregate_values(), vec![0.0, 0.0]);
        let sym = Pool::from_parts(vec![0.5, 0.5], vec![vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(sym.aggregate_values(), vec![4.0, 4.0]);
    }

    #[test]
    fn reshuffle_examples() {
        let p = pool_a();
        let swapped = p.reshuffle(&Permutation::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(swapped.losses(), &[vec![2.0, 2.0, 2.0], vec![0.0, 4.0, 8.0]]);
        assert_eq!(p.reshuffle(&Permutation::identity(2)).unwrap(), p);

        let three = Pool::new(
            space3(),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]],
        )
        .unwrap();
        let r = three.reshuffle(&Permutation::new(vec![2, 0, 1]).unwrap()).unwrap();
        assert_eq!(r.row(0), three.row(2));
        assert_eq!(r.row(1), three.row(0));
        assert_eq!(r.row(2), three.row(1));

        assert!(matches!(
            p.reshuffle(&Permutation::identity(3)),
            Err(Error::InvalidPermutation(_))
        ));
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inverse().mapping(), &[1, 2, 0]);
        assert!(Permutation::identity(4).is_identity());
    }

    #[test]
    fn expectation_examples() {
        let s = space3();
        let x = RandomVariable::new(s.clone(), vec![0.0, 4.0, 8.0]).unwrap();
        assert_eq!(expectation(&x), 3.0);
        assert_eq!(expectation(&RandomVariable::constant(s, 7.5)), 7.5);
        let y = RandomVariable::new(Arc::new(ProbSpace::uniform(2).unwrap()), vec![1.0, 3.0]).unwrap();
        assert_eq!(expectation(&y), 2.0);
    }

    #[test]
    fn covariance_examples() {
        let s = space3();
        let x = RandomVariable::new(s.clone(), vec![0.0, 4.0, 8.0]).unwrap();
        let agg = pool_a().aggregate();
        assert_eq!(covariance(&x, &agg).unwrap(), 11.0);
        assert_eq!(covariance(&agg, &agg).unwrap(), 11.0);
        let c = RandomVariable::constant(s, 3.0);
        assert_eq!(covariance(&c, &agg).unwrap(), 0.0);

        let other = RandomVariable::new(Arc::new(ProbSpace::uniform(3).unwrap()), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(covariance(&x, &other), Err(Error::SpaceMismatch));
    }

    #[test]
    fn level_sets_split_at_gaps() {
        let groups = level_sets(&[4.0, 2.0, 4.0, 4.0 + 1e-12, 7.0]);
        assert_eq!(groups, vec![vec![1], vec![0, 2, 3], vec![4]]);
        assert_eq!(level_sets(&[1.0]), vec![vec![0]]);
    }

    #[test]
    fn stable_sum_ignores_order() {
        let a = [0.1, 0.7, 1e16, -1e16, 0.2];
        let b = [0.2, -1e16, 0.7, 0.1, 1e16];
        assert_eq!(stable_sum(a).to_bits(), stable_sum(b).to_bits());
    }
}
