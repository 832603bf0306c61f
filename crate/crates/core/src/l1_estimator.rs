//! Streaming (1 +- eps) l1-norm estimation from subsampled heavy hitters.
//!
//! A [`ShhLayout`] holds the hash functions: a pairwise-independent map of
//! coordinates to nested subsampling levels `0..=L_hat` and one heavy-hitter
//! hashing per level. A [`ShhState`] stores scalar bucket sums for that layout.
//! [`estimate_with`] runs the window-based recovery given any way of turning a
//! bucket into an f-value, which lets the tensor sketch reuse it with
//! recursive decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heavy_hitter::{HhHashing, HhParams};
use crate::numerics::{cauchy_from_uniform, median_in_place, splitmix64, unit_open, Rng};

/// Mersenne prime `2^61 - 1` for the affine level hash.
const PRIME: u64 = (1 << 61) - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShhConfig {
    pub eps: f64,
    /// Ratio bound `K` with `M <= M_hat <= K M`; a power of two.
    pub k: u64,
    /// Number of coordinates.
    pub n: usize,
    pub alpha: f64,
    /// Multiplier of `eps^3 / L^3` in the heaviness threshold.
    pub theta_mult: f64,
    /// Multiplier of `L^3 / eps^3` in the number of heavy hitters kept per level.
    pub top_mult: f64,
    /// Multiplier inside `j0 = log2(j0_mult * K * L^3 / eps^3)`.
    pub j0_mult: f64,
    /// Scales the window-count range `L^2 / eps^2` of the deep levels.
    pub count_scale: f64,
    /// Window endpoints use `margin_factor * eps` instead of `eps`.
    pub margin_factor: f64,
    pub c_b: f64,
    pub buckets: Option<usize>,
    pub hh_reps: Option<usize>,
}

impl ShhConfig {
    pub fn new(eps: f64, k: u64, n: usize) -> Self {
        Self {
            eps,
            k,
            n,
            alpha: 0.5,
            theta_mult: 1.0 / 180.0,
            top_mult: 4.0,
            j0_mult: 4.0,
            count_scale: 1.0,
            margin_factor: 0.25,
            c_b: HhParams::DEFAULT_C_B,
            buckets: None,
            hh_reps: None,
        }
    }

    pub fn with_k(&self, k: u64) -> Self {
        Self { k, ..self.clone() }
    }

    pub fn with_hh_sizes(mut self, buckets: usize, reps: usize) -> Self {
        self.buckets = Some(buckets);
        self.hh_reps = Some(reps);
        self
    }

    pub fn derive(&self) -> Result<ShhDerived> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.k < 2 || !self.k.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("K must be a power of two >= 2, got {}", self.k)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let eps = self.eps;
        let k = self.k as f64;
        let n = self.n as f64;
        let l = (k * n / eps).log2().ceil().max(1.0);
        let l_hat = n.log2().ceil().max(0.0) as usize;
        let theta = (self.theta_mult * eps.powi(3) / l.powi(3))
            .min(self.alpha * eps / 3.0)
            .min(self.alpha * eps / 4.0);
        let lcube = l.powi(3) / eps.powi(3);
        let j0 = (self.j0_mult * k * lcube).log2().ceil().max(0.0) as usize;
        let top_k = (self.top_mult * lcube).ceil().clamp(1.0, usize::MAX as f64 / 2.0) as usize;
        let base = self.count_scale * l * l / (eps * eps);
        let root = 20f64.sqrt() * eps;
        Ok(ShhDerived {
            l: l as usize,
            l_hat,
            theta,
            hh_delta: 0.05 / (l_hat as f64 + 1.0),
            j0,
            top_k,
            count_lo: (1.0 - root) * base,
            count_hi: 2.0 * (1.0 + root) * base,
            margin: self.margin_factor * eps,
        })
    }
}

/// Constants computed from a [`ShhConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShhDerived {
    /// Number of magnitude levels `ceil(log2(K N / eps))`.
    pub l: usize,
    /// Deepest subsampling level `ceil(log2 N)`.
    pub l_hat: usize,
    pub theta: f64,
    pub hh_delta: f64,
    pub j0: usize,
    pub top_k: usize,
    pub count_lo: f64,
    pub count_hi: f64,
    pub margin: f64,
}

/// Hash functions shared by every accumulator built on this layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ShhLayout {
    config: ShhConfig,
    derived: ShhDerived,
    hash_a: u64,
    hash_b: u64,
    level_of: Vec<u8>,
    hashing: Vec<HhHashing>,
}

/// Level of `i` under `(a i + b) mod p`, reduced to `l_hat` bits: the number
/// of trailing zeros, capped at `l_hat`.
fn level_hash(a: u64, b: u64, i: u64, l_hat: usize) -> usize {
    let v = ((a as u128 * (i % PRIME) as u128 + b as u128) % PRIME as u128) as u64;
    let low = if l_hat >= 64 { v } else { v & ((1u64 << l_hat) - 1) };
    if low == 0 {
        l_hat
    } else {
        (low.trailing_zeros() as usize).min(l_hat)
    }
}

impl ShhLayout {
    pub fn build(rng: &mut Rng, config: &ShhConfig) -> Result<Self> {
        let derived = config.derive()?;
        let mut hr = rng.derive(0);
        let hash_a = 1 + hr.next_u64() % (PRIME - 1);
        let hash_b = hr.next_u64() % PRIME;
        let level_of = (0..config.n as u64)
            .map(|i| level_hash(hash_a, hash_b, i, derived.l_hat) as u8)
            .collect();
        let mut params = HhParams::new(derived.theta, derived.hh_delta);
        params.c_b = config.c_b;
        params.buckets = config.buckets;
        params.reps = config.hh_reps;
        let hashing = (0..=derived.l_hat)
            .map(|l| HhHashing::build(&mut rng.derive(1 + l as u64), config.n, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            derived,
            hash_a,
            hash_b,
            level_of,
            hashing,
        })
    }

    pub fn config(&self) -> &ShhConfig {
        &self.config
    }

    pub fn derived(&self) -> &ShhDerived {
        &self.derived
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn levels(&self) -> usize {
        self.derived.l_hat + 1
    }

    /// Deepest level containing coordinate `i`; it also belongs to every shallower level.
    pub fn level_of(&self, i: usize) -> usize {
        self.level_of[i] as usize
    }

    pub fn hashing(&self, level: usize) -> &HhHashing {
        &self.hashing[level]
    }

    pub fn cells_per_level(&self) -> usize {
        self.hashing[0].cells()
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_level() * self.levels()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.config.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                dim: self.config.n,
            })
        }
    }

    /// Calls `visit(global cell, sign)` for every bucket that coordinate `i` feeds.
    #[inline]
    pub fn for_each_cell(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        let per = self.cells_per_level();
        for l in 0..=self.level_of(i) {
            let h = &self.hashing[l];
            for r in 0..h.reps() {
                visit(l * per + h.cell(r, i), h.sign(r, i));
            }
        }
    }
}

/// Scalar bucket sums for one layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ShhState {
    layout: ShhLayout,
    values: Vec<f64>,
}

/// Window estimate at magnitude level `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub j: usize,
    pub value: f64,
    pub ell_used: Option<usize>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShhEstimate {
    pub total: f64,
    pub zeta: f64,
    pub levels: Vec<LevelEstimate>,
}

impl ShhState {
    pub fn build(rng: &mut Rng, config: &ShhConfig) -> Result<Self> {
        let layout = ShhLayout::build(rng, config)?;
        let values = vec![0.0; layout.total_cells()];
        Ok(Self { layout, values })
    }

    /// Empty accumulators over an existing layout.
    pub fn from_layout(layout: ShhLayout) -> Self {
        let values = vec![0.0; layout.total_cells()];
        Self { layout, values }
    }

    pub fn layout(&self) -> &ShhLayout {
        &self.layout
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.values
    }

    pub fn update(&mut self, i: usize, delta: f64) -> Result<()> {
        self.layout.check_index(i)?;
        let values = &mut self.values;
        self.layout.for_each_cell(i, |c, s| values[c] += s * delta);
        Ok(())
    }

    pub fn add_assign(&mut self, other: &ShhState) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::InvalidParameter("states do not share hash functions".into()));
        }
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Runs the recovery with a fresh boundary draw `zeta ~ U[1/2, 1]`.
    pub fn estimate(&self, m_hat: f64, rng: &mut Rng) -> Result<ShhEstimate> {
        let zeta = rng.uniform_range(0.5, 1.0);
        self.estimate_at(m_hat, zeta)
    }

    pub fn estimate_at(&self, m_hat: f64, zeta: f64) -> Result<ShhEstimate> {
        estimate_with(&self.layout, m_hat, zeta, |c| self.values[c].abs())
    }
}

/// Window recovery. `cell_value(c)` is the f-value of global bucket `c`; each
/// bucket is evaluated at most once.
pub fn estimate_with(
    layout: &ShhLayout,
    m_hat: f64,
    zeta: f64,
    cell_value: impl FnMut(usize) -> f64,
) -> Result<ShhEstimate> {
    estimate_with_derived(layout, &layout.derived, m_hat, zeta, cell_value)
}

/// As [`estimate_with`] but with constants derived for another `K` or `eps`
/// over the same hash functions.
pub fn estimate_with_derived(
    layout: &ShhLayout,
    dv: &ShhDerived,
    m_hat: f64,
    zeta: f64,
    mut cell_value: impl FnMut(usize) -> f64,
) -> Result<ShhEstimate> {
    if !(m_hat > 0.0) || !m_hat.is_finite() {
        return Err(Error::InvalidParameter(format!("M_hat must be positive, got {m_hat}")));
    }
    if dv.l_hat != layout.derived.l_hat {
        return Err(Error::InvalidParameter("derived constants do not match the layout".into()));
    }
    let per = layout.cells_per_level();
    let mut cache = vec![f64::NAN; layout.total_cells()];
    let mut lambdas: Vec<Vec<f64>> = Vec::with_capacity(layout.levels());
    for l in 0..layout.levels() {
        let h = &layout.hashing[l];
        let mut est: Vec<f64> = (0..layout.n())
            .filter(|&i| layout.level_of(i) >= l)
            .map(|i| {
                h.query_with(i, |c| {
                    let g = l * per + c;
                    if cache[g].is_nan() {
                        cache[g] = cell_value(g);
                    }
                    cache[g]
                })
            })
            .collect();
        est.sort_by(|a, b| b.total_cmp(a));
        est.truncate(dv.top_k);
        lambdas.push(est);
    }
    let in_window = |lam: &[f64], lo: f64, hi: f64| {
        lam.iter()
            .filter(|&&v| v >= lo && v <= hi)
            .fold((0usize, 0.0f64), |(c, s), &v| (c + 1, s + v))
    };
    let mut levels = Vec::with_capacity(dv.l + 1);
    let mut total = 0.0;
    for j in 0..=dv.l {
        let t = zeta * m_hat / 2f64.powi(j as i32);
        let (lo, hi) = ((1.0 + dv.margin) * t, (2.0 - dv.margin) * t);
        let entry = if j <= dv.j0 {
            let (count, sum) = in_window(&lambdas[0], lo, hi);
            LevelEstimate {
                j,
                value: sum,
                ell_used: Some(0),
                count,
            }
        } else {
            (0..layout.levels())
                .rev()
                .find_map(|l| {
                    let (count, sum) = in_window(&lambdas[l], lo, hi);
                    let c = count as f64;
                    (c >= dv.count_lo && c <= dv.count_hi).then(|| LevelEstimate {
                        j,
                        value: sum * 2f64.powi(l as i32),
                        ell_used: Some(l),
                        count,
                    })
                })
                .unwrap_or(LevelEstimate {
                    j,
                    value: 0.0,
                    ell_used: None,
                    count: 0,
                })
        };
        total += entry.value;
        levels.push(entry);
    }
    Ok(ShhEstimate { total, zeta, levels })
}

/// Independent states for every `K'` in `2, 4, ..., K`, each repeated `reps` times.
#[derive(Clone, Debug)]
pub struct BoostedShh {
    grid: Vec<(u64, Vec<ShhState>)>,
}

impl BoostedShh {
    pub fn build(rng: &mut Rng, config: &ShhConfig, reps: usize) -> Result<Self> {
        if reps == 0 {
            return Err(Error::InvalidParameter("need at least one repetition".into()));
        }
        config.derive()?;
        let mut grid = Vec::new();
        let mut k = 2u64;
        while k <= config.k {
            let cfg = config.with_k(k);
            let states = (0..reps)
                .map(|r| ShhState::build(&mut rng.derive((k << 16) | r as u64), &cfg))
                .collect::<Result<Vec<_>>>()?;
            grid.push((k, states));
            k *= 2;
        }
        Ok(Self { grid })
    }

    /// Single-point grid around existing states.
    pub fn from_states(k: u64, states: Vec<ShhState>) -> Self {
        Self {
            grid: vec![(k, states)],
        }
    }

    pub fn update(&mut self, i: usize, delta: f64) -> Result<()> {
        for (_, states) in &mut self.grid {
            for s in states {
                s.update(i, delta)?;
            }
        }
        Ok(())
    }

    /// Maximum over the grid of the median over repetitions.
    pub fn estimate(&self, m_hat: f64, rng: &mut Rng) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for (_, states) in &self.grid {
            let mut v = states
                .iter()
                .map(|s| s.estimate(m_hat, rng).map(|e| e.total))
                .collect::<Result<Vec<_>>>()?;
            best = best.max(median_in_place(&mut v));
        }
        Ok(best)
    }
}

/// Counter-based Cauchy median sketch used for the rough estimate `M_hat`.
///
/// Entries are regenerated from `(seed, row, key)`, so arbitrary 64-bit keys
/// (including hashed tuples) can be streamed without a table.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughEstimator {
    seed: u64,
    acc: Vec<f64>,
}

impl RoughEstimator {
    /// Rows per `ln(1/zeta)`; gives `Z in [M/2, 3M/2]` with probability at least `1 - zeta`.
    pub const ROWS_PER_LOG: f64 = 22.0;
    /// Ratio bound of the returned `M_hat = 2 Z`.
    pub const K: u64 = 4;

    pub fn new(seed: u64, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::InvalidParameter(format!("zeta must lie in (0, 1), got {zeta}")));
        }
        let rows = (Self::ROWS_PER_LOG * (1.0 / zeta).ln()).ceil() as usize | 1;
        Ok(Self {
            seed,
            acc: vec![0.0; rows],
        })
    }

    pub fn rows(&self) -> usize {
        self.acc.len()
    }

    #[inline]
    pub fn entry(&self, row: usize, key: u64) -> f64 {
        let h = splitmix64(self.seed ^ splitmix64(key ^ splitmix64(row as u64 ^ 0x5EED_0F_C0FFEE)));
        cauchy_from_uniform(unit_open(h))
    }

    pub fn update(&mut self, key: u64, delta: f64) {
        for r in 0..self.acc.len() {
            self.acc[r] += delta * self.entry(r, key);
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.acc
    }

    pub fn add_assign(&mut self, other: &RoughEstimator) -> Result<()> {
        if self.seed != other.seed || self.acc.len() != other.acc.len() {
            return Err(Error::InvalidParameter("rough estimators differ".into()));
        }
        self.acc.iter_mut().zip(&other.acc).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `2 * median |acc|`.
    pub fn estimate(&self) -> f64 {
        let mut v: Vec<f64> = self.acc.iter().map(|x| x.abs()).collect();
        2.0 * median_in_place(&mut v)
    }
}

/// Rough `M_hat` with `||x||_1 <= M_hat <= 3 ||x||_1` with probability at least 0.99.
pub fn rough_estimate(rng: &mut Rng, x: &[f64]) -> f64 {
    let mut r = RoughEstimator::new(rng.next_u64(), 0.01).expect("valid zeta");
    for (i, &v) in x.iter().enumerate() {
        if v != 0.0 {
            r.update(i as u64, v);
        }
    }
    r.estimate()
}
