use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{Pool, ProbSpace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryParams {
    /// Atoms of the shared space; at least 3.
    pub atoms: usize,
    pub random_pools: usize,
    pub min_participants: usize,
    pub max_participants: usize,
    /// Random losses are integers in `0..=max_loss`.
    pub max_loss: u32,
    /// Families of pools that split one common aggregate.
    pub families: usize,
    pub family_size: usize,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            atoms: 6,
            random_pools: 40,
            min_participants: 2,
            max_participants: 4,
            max_loss: 20,
            families: 4,
            family_size: 4,
        }
    }
}

impl BatteryParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidBattery(m.into()));
        if self.atoms < 3 {
            return bad("battery needs at least 3 atoms");
        }
        if self.atoms > 4096 {
            return bad("battery atoms capped at 4096");
        }
        if self.min_participants < 2 || self.min_participants > self.max_participants {
            return bad("participant range must satisfy 2 <= min <= max");
        }
        if self.max_participants > 16 {
            return bad("battery participants capped at 16");
        }
        if self.max_loss == 0 {
            return bad("max_loss must be positive");
        }
        if self.families > 0 && self.family_size < 2 {
            return bad("collision families need at least 2 pools");
        }
        Ok(())
    }
}

/// Pools on one shared space, with labels saying how each was built.
///
/// Generated batteries use dyadic probabilities and integer losses, so
/// sums, means and covariances over them are exact in floating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Battery {
    pub seed: Option<u64>,
    pub params: Option<BatteryParams>,
    labels: Vec<String>,
    pools: Vec<Pool>,
}

impl Battery {
    pub fn generate(seed: u64, params: &BatteryParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = params.atoms;
        let space = Arc::new(ProbSpace::new(dyadic_weights(&mut rng, m))?);
        let mut b = Builder { space, labels: vec![], pools: vec![] };

        b.push("zero", vec![vec![0.0; m]; 3])?;
        b.push("constant", (1..=3).map(|c| vec![c as f64; m]).collect())?;
        b.push("comonotone", (1..=3).map(|c| (0..m).map(|j| (c * j) as f64).collect()).collect())?;
        b.push("distinct_s", vec![(0..m).map(|j| 4.0 * j as f64).collect(), vec![2.0; m]])?;
        b.push("tied_s", tied_rows(m))?;
        b.push("countermonotone", vec![(0..m).map(|j| j as f64).collect(), (0..m).map(|j| (m - 1 - j) as f64).collect()])?;
        b.push("nonzero_covariance_pair", vec![(0..m).map(|j| 4.0 * j as f64).collect(), (0..m).map(|j| (j * j % 7) as f64 + 1.0).collect()])?;
        let equal_q = equal_q_rows(&mut rng, b.space.weights(), params.max_loss);
        let partner_s: Vec<f64> = (0..m).map(|j| equal_q[0][j] + equal_q[1][j]).collect();
        b.push("equal_mean_and_first_atom", equal_q)?;
        b.push("equal_mean_partner", vec![partner_s, vec![0.0; m]])?;

        for f in 0..params.families {
            let n = rng.gen_range(params.min_participants..=params.max_participants);
            let s: Vec<u64> = (0..m)
                .map(|_| rng.gen_range(n as u64..=params.max_loss as u64 * n as u64))
                .collect();
            let mut first = vec![vec![0.0; m]; n];
            first[0] = s.iter().map(|&v| v as f64).collect();
            b.push(&format!("family{f}/concentrated"), first)?;
            for k in 1..params.family_size {
                b.push(&format!("family{f}/split{k}"), random_split(&mut rng, &s, n))?;
            }
        }

        for k in 0..params.random_pools {
            let n = rng.gen_range(params.min_participants..=params.max_participants);
            let rows = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(0..=params.max_loss) as f64).collect())
                .collect();
            b.push(&format!("random{k}"), rows)?;
        }

        Ok(Self { seed: Some(seed), params: Some(params.clone()), labels: b.labels, pools: b.pools })
    }

    /// Wrap caller-supplied pools; they must share one probability space.
    pub fn from_pools(pools: Vec<Pool>) -> Result<Self> {
        let first = pools.first().ok_or_else(|| Error::InvalidBattery("battery has no pools".into()))?;
        if pools.iter().any(|p| p.space().as_ref() != first.space().as_ref()) {
            return Err(Error::InvalidBattery("battery pools must share one probability space".into()));
        }
        let labels = (0..pools.len()).map(|k| format!("pool{k}")).collect();
        Ok(Self { seed: None, params: None, labels, pools })
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        self.pools[0].space()
    }
}

struct Builder {
    space: Arc<ProbSpace>,
    labels: Vec<String>,
    pools: Vec<Pool>,
}

impl Builder {
    fn push(&mut self, label: &str, rows: Vec<Vec<f64>>) -> Result<()> {
        self.pools.push(Pool::new(self.space.clone(), rows)?);
        self.labels.push(label.to_string());
        Ok(())
    }
}

/// Random probabilities `k_j / K` with `K` a power of two and every `k_j >= 1`.
fn dyadic_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let total = (4 * m).next_power_of_two().max(64);
    let mut k = vec![1usize; m];
    for _ in 0..total - m {
        k[rng.gen_range(0..m)] += 1;
    }
    k.into_iter().map(|v| v as f64 / total as f64).collect()
}

/// Two members whose aggregate repeats on consecutive atom pairs while the
/// individual losses differ inside each pair.
fn tied_rows(m: usize) -> Vec<Vec<f64>> {
    let s = |j: usize| 4.0 * (j / 2) as f64 + 8.0;
    let x1: Vec<f64> = (0..m).map(|j| (j / 2 + j % 2) as f64).collect();
    let x2 = (0..m).map(|j| s(j) - x1[j]).collect();
    vec![x1, x2]
}

/// Two distinct members with equal means and equal losses at atom 0: the
/// second is the first plus a zero-mean shift supported on atoms 1 and 2.
fn equal_q_rows(rng: &mut ChaCha8Rng, p: &[f64], max_loss: u32) -> Vec<Vec<f64>> {
    // p_j = k_j / K, so k_1 * p_2 - k_2 * p_1 = 0 exactly.
    let (k1, k2) = (p[1] * 1024.0 * 1024.0, p[2] * 1024.0 * 1024.0);
    let (k1, k2) = reduce(k1, k2);
    let x1: Vec<f64> = (0..p.len())
        .map(|_| rng.gen_range(0..=max_loss) as f64 + k1)
        .collect();
    let mut x2 = x1.clone();
    x2[1] += k2;
    x2[2] -= k1;
    vec![x1, x2]
}

fn reduce(a: f64, b: f64) -> (f64, f64) {
    let (mut a, mut b) = (a as u64, b as u64);
    while a % 2 == 0 && b % 2 == 0 {
        a /= 2;
        b /= 2;
    }
    (a as f64, b as f64)
}

/// Split each `s[j]` into `n` nonnegative integers at random cut points.
fn random_split(rng: &mut ChaCha8Rng, s: &[u64], n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; s.len()]; n];
    for (j, &total) in s.iter().enumerate() {
        let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.gen_range(0..=total)).collect();
        cuts.push(0);
        cuts.push(total);
        cuts.sort_unstable();
        for i in 0..n {
            rows[i][j] = (cuts[i + 1] - cuts[i]) as f64;
        }
    }
    rows
}

/// Independent random pools, each on its own random space: `n` and `m`
/// uniform in the given ranges, losses uniform in `[0, max_loss]`.
pub fn random_pools(
    seed: u64,
    count: usize,
    participants: (usize, usize),
    atoms: (usize, usize),
    max_loss: f64,
) -> Result<Vec<Pool>> {
    if participants.0 == 0 || participants.0 > participants.1 || atoms.0 == 0 || atoms.0 > atoms.1 {
        return Err(Error::InvalidBattery("empty participant or atom range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(participants.0..=participants.1);
            let m = rng.gen_range(atoms.0..=atoms.1);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights = raw.iter().map(|w| w / total).collect();
            let losses = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(0.0..=max_loss)).collect())
                .collect();
            Pool::from_parts(weights, losses)
        })
        .collect()
}
