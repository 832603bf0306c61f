//! Streaming independence testing with a tower of tensor-product sketches.
//!
//! Mode `k` of the tower is a subsampled heavy-hitter layout over `[d]` with
//! `R_k` repetitions. The sketch of a tensor over `[d]^k` is obtained by
//! routing every slice along the last index into the buckets of mode `k` and
//! sketching the slice with modes `1..k`. On a rank-one increment this is the
//! Kronecker product of per-mode sketch vectors, which is how updates are
//! applied. Mode 1 is the fastest-varying index of the flat vector.
//!
//! The product of marginals is never stored: each mode keeps scalar buckets of
//! its marginal under the same hashes, and their Kronecker product is the
//! sketch of the product distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1_estimator::{estimate_with_derived, RoughEstimator, ShhConfig, ShhDerived, ShhLayout};
use crate::numerics::{median_in_place, Rng};

/// Largest realized top-level sketch, in accumulators.
pub const MAX_ACCUMULATORS: usize = 1 << 27;
/// Largest `d^q` for which the product of marginals is enumerated.
pub const MAX_TUPLES: u64 = 10_000_000;
/// Stream id of the decoding randomness.
pub const DECODE_STREAM: u64 = 0xDEC0;

/// A stream item `(i_1, ..., i_q)` with a signed multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamUpdate {
    pub indices: Vec<usize>,
    pub delta: i64,
}

impl StreamUpdate {
    pub fn new(indices: Vec<usize>, delta: i64) -> Self {
        Self { indices, delta }
    }

    pub fn sample(indices: Vec<usize>) -> Self {
        Self::new(indices, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorConfig {
    pub q: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    /// Ratio between consecutive mode accuracies.
    pub alpha: f64,
    /// Exponent of `L_i / eps_i` in the symbolic sketch-length recursion.
    pub c: u32,
    /// Ratio bound of the top-level `M_hat`.
    pub k: u64,
    pub margin_factor: f64,
    /// Repetitions per inner mode; `None` uses `ceil(log2(q / delta))`.
    pub reps: Option<usize>,
    /// Repetitions of the top mode; `None` uses the inner rule.
    pub top_reps: Option<usize>,
    pub buckets: Option<usize>,
    pub hh_reps: Option<usize>,
}

impl TensorConfig {
    pub fn new(q: usize, d: usize, eps: f64, delta: f64) -> Self {
        Self {
            q,
            d,
            eps,
            delta,
            alpha: 0.5,
            c: 4,
            k: RoughEstimator::K,
            margin_factor: 0.25,
            reps: None,
            top_reps: None,
            buckets: None,
            hh_reps: None,
        }
    }

    /// Desk-scale sizes: `2d` buckets rounded up to a power of two, three
    /// heavy-hitter repetitions, three inner and five top repetitions.
    pub fn desk(q: usize, d: usize, eps: f64) -> Self {
        Self {
            reps: Some(3),
            top_reps: Some(5),
            buckets: Some((2 * d).next_power_of_two()),
            hh_reps: Some(3),
            ..Self::new(q, d, eps, 0.1)
        }
    }

    fn mode_config(&self, eps: f64, k: u64) -> ShhConfig {
        let mut c = ShhConfig::new(eps, k, self.d);
        c.alpha = self.alpha;
        c.margin_factor = self.margin_factor;
        c.buckets = self.buckets;
        c.hh_reps = self.hh_reps;
        c
    }
}

/// Per-mode parameters of the tower.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub mode: usize,
    pub eps: f64,
    pub delta: f64,
    pub k: u64,
    pub l: usize,
    pub l_hat: usize,
    pub reps: usize,
    pub buckets: usize,
    pub hh_reps: usize,
    /// Realized payload length per bucket (`t_{i-1}`).
    pub payload_len: usize,
    /// Realized sketch length (`t_i`).
    pub len: usize,
    /// `(L_i / eps_i)^c * t_{i-1} * log K * log(K / delta_i)` with unit constants.
    pub t_formula: f64,
}

impl ModeParams {
    /// Buckets per subsampling level, over all heavy-hitter repetitions.
    pub fn cells(&self) -> usize {
        self.buckets * self.hh_reps
    }

    /// Length of one mode's sketch of a vector over `[d]`.
    pub fn block(&self) -> usize {
        self.reps * (self.l_hat + 1) * self.cells()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    pub q: usize,
    pub d: usize,
    pub k: u64,
    pub c: u32,
    pub alpha: f64,
    pub modes: Vec<ModeParams>,
}

impl ModeSchedule {
    pub fn new(config: &TensorConfig) -> Result<Self> {
        if config.q == 0 {
            return Err(Error::InvalidParameter("q must be at least 1".into()));
        }
        if config.d < 2 {
            return Err(Error::InvalidParameter(format!("d must be at least 2, got {}", config.d)));
        }
        if !(config.delta > 0.0 && config.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", config.delta)));
        }
        let q = config.q;
        let delta_i = config.delta / q as f64;
        let default_reps = ((1.0 / delta_i).log2().ceil() as usize).max(1);
        let mut modes = Vec::with_capacity(q);
        let mut t_prev = 1usize;
        let mut tf_prev = 1.0f64;
        for mode in 1..=q {
            let eps = config.eps * config.alpha.powi((q - mode) as i32);
            let k = if mode == q { config.k } else { 2 };
            let derived = config.mode_config(eps, k).derive()?;
            let mut hh = crate::heavy_hitter::HhParams::new(derived.theta, derived.hh_delta);
            hh.buckets = config.buckets;
            hh.reps = config.hh_reps;
            let (buckets, hh_reps) = hh.sizes(config.d).map_err(|e| match e {
                Error::TooLarge(msg) => Error::TooLarge(format!("sketch length t_{mode} is not representable: {msg}")),
                e => e,
            })?;
            let reps = if mode == q { config.top_reps } else { config.reps }.unwrap_or(default_reps);
            if reps == 0 {
                return Err(Error::InvalidParameter("repetitions must be positive".into()));
            }
            let kf = config.k as f64;
            let t_formula = (derived.l as f64 / eps).powi(config.c as i32)
                * tf_prev
                * kf.log2()
                * (kf / delta_i).log2();
            let block = reps * (derived.l_hat + 1) * buckets * hh_reps;
            let len = block
                .checked_mul(t_prev)
                .filter(|&t| t <= MAX_ACCUMULATORS)
                .ok_or_else(|| {
                    Error::TooLarge(format!(
                        "sketch length t_{mode} = {} exceeds {MAX_ACCUMULATORS} accumulators",
                        block as f64 * t_prev as f64
                    ))
                })?;
            modes.push(ModeParams {
                mode,
                eps,
                delta: delta_i,
                k,
                l: derived.l,
                l_hat: derived.l_hat,
                reps,
                buckets,
                hh_reps,
                payload_len: t_prev,
                len,
                t_formula,
            });
            t_prev = len;
            tf_prev = t_formula;
        }
        Ok(Self {
            q,
            d: config.d,
            k: config.k,
            c: config.c,
            alpha: config.alpha,
            modes,
        })
    }

    /// `sum_i R_i (L_hat_i + 1)`.
    pub fn structure_count(&self) -> usize {
        self.modes.iter().map(|m| m.reps * (m.l_hat + 1)).sum()
    }

    pub fn top_len(&self) -> usize {
        self.modes.last().map_or(1, |m| m.len)
    }
}

/// Accumulator and per-update work counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub p_accumulators: usize,
    pub q_accumulators: usize,
    pub marginal_counters: usize,
    pub rough_rows: usize,
    /// `sum_i R_i (L_hat_i + 1) Q_i t_{i-1}` over all modes.
    pub tower_total: usize,
    /// Largest number of P accumulators a single update can touch.
    pub max_touched_per_update: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdEstimate {
    pub estimate: f64,
    pub m: f64,
    /// Rough bound on `||P - Q||_1`.
    pub m_hat: f64,
    /// Median over top repetitions for each `K'` of the grid, normalized.
    pub grid: Vec<(u64, f64)>,
}

#[derive(Clone, Debug)]
pub struct TensorState {
    config: TensorConfig,
    schedule: ModeSchedule,
    seed: u64,
    /// `[mode][rep]`.
    layouts: Vec<Vec<ShhLayout>>,
    q_layouts: Vec<Vec<ShhLayout>>,
    derived: Vec<ShhDerived>,
    p: Vec<f64>,
    q_sketch: Vec<Vec<f64>>,
    marginals: Vec<Vec<f64>>,
    rough: RoughEstimator,
    m: f64,
    finalized: bool,
}

impl TensorState {
    pub fn build(rng: &mut Rng, config: &TensorConfig) -> Result<Self> {
        let schedule = ModeSchedule::new(config)?;
        if (config.d as f64).powi(config.q as i32) >= u64::MAX as f64 / 2.0 {
            return Err(Error::Overflow {
                what: "d^q",
                detail: format!("{}^{}", config.d, config.q),
            });
        }
        let mut layouts = Vec::with_capacity(config.q);
        let mut derived = Vec::with_capacity(config.q);
        for mp in &schedule.modes {
            let cfg = config.mode_config(mp.eps, mp.k);
            let reps = (0..mp.reps)
                .map(|r| ShhLayout::build(&mut rng.derive(((mp.mode as u64) << 16) | r as u64), &cfg))
                .collect::<Result<Vec<_>>>()?;
            derived.push(reps[0].derived().clone());
            layouts.push(reps);
        }
        let q_layouts = layouts.clone();
        for (a, b) in layouts.iter().flatten().zip(q_layouts.iter().flatten()) {
            assert!(a == b, "P and Q structures must share hash functions");
        }
        let rough = RoughEstimator::new(rng.derive(0xF00D).next_u64(), 0.01)?;
        Ok(Self {
            config: config.clone(),
            p: vec![0.0; schedule.top_len()],
            q_sketch: schedule.modes.iter().map(|m| vec![0.0; m.block()]).collect(),
            marginals: vec![vec![0.0; config.d]; config.q],
            schedule,
            seed: rng.seed(),
            layouts,
            q_layouts,
            derived,
            rough,
            m: 0.0,
            finalized: false,
        })
    }

    pub fn config(&self) -> &TensorConfig {
        &self.config
    }

    pub fn schedule(&self) -> &ModeSchedule {
        &self.schedule
    }

    /// Layout of repetition `rep` at `mode` (1-based).
    pub fn layout(&self, mode: usize, rep: usize) -> &ShhLayout {
        &self.layouts[mode - 1][rep]
    }

    pub fn q_layout(&self, mode: usize, rep: usize) -> &ShhLayout {
        &self.q_layouts[mode - 1][rep]
    }

    /// Maintained sketch of the joint frequency tensor.
    pub fn p_sketch(&self) -> &[f64] {
        &self.p
    }

    /// Scalar marginal buckets of `mode`.
    pub fn q_buckets(&self, mode: usize) -> &[f64] {
        &self.q_sketch[mode - 1]
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Cauchy rows of the joint stream, before the marginal product is subtracted.
    pub fn rough(&self) -> &RoughEstimator {
        &self.rough
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    fn check(&self, u: &StreamUpdate) -> Result<()> {
        if self.finalized {
            return Err(Error::StreamState("update after the stream was finalized"));
        }
        if u.indices.len() != self.config.q {
            return Err(Error::DimensionMismatch {
                expected: self.config.q,
                got: u.indices.len(),
            });
        }
        if let Some(&i) = u.indices.iter().find(|&&i| i >= self.config.d) {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.config.d,
            });
        }
        Ok(())
    }

    /// Nonzeros of mode `mode`'s sketch of `e_i`.
    fn mode_vector(&self, mode: usize, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (r, layout) in self.layouts[mode - 1].iter().enumerate() {
            let base = r * layout.total_cells();
            layout.for_each_cell(i, |g, s| out.push((base + g, s)));
        }
        out
    }

    /// Mixed-radix key of a tuple, mode 1 least significant.
    fn key(&self, indices: &[usize]) -> u64 {
        indices
            .iter()
            .rev()
            .fold(0u64, |acc, &i| acc * self.config.d as u64 + i as u64)
    }

    /// Adds `delta * (e_{i_q} ⊗ ... ⊗ e_{i_1})` to the joint sketch.
    pub fn update_p(&mut self, u: &StreamUpdate) -> Result<()> {
        self.check(u)?;
        let mut terms = vec![(0usize, u.delta as f64)];
        for mode in 1..=self.config.q {
            let stride = self.schedule.modes[mode - 1].payload_len;
            let vec = self.mode_vector(mode, u.indices[mode - 1]);
            terms = terms
                .iter()
                .flat_map(|&(off, v)| vec.iter().map(move |&(idx, s)| (off + idx * stride, v * s)))
                .collect();
        }
        for (idx, v) in terms {
            self.p[idx] += v;
        }
        self.rough.update(self.key(&u.indices), u.delta as f64);
        self.m += u.delta as f64;
        Ok(())
    }

    /// Adds `delta` to each mode's marginal buckets and counters.
    pub fn update_q(&mut self, u: &StreamUpdate) -> Result<()> {
        self.check(u)?;
        for mode in 1..=self.config.q {
            let i = u.indices[mode - 1];
            let buckets = &mut self.q_sketch[mode - 1];
            for (r, layout) in self.q_layouts[mode - 1].iter().enumerate() {
                let base = r * layout.total_cells();
                layout.for_each_cell(i, |g, s| buckets[base + g] += s * u.delta as f64);
            }
            self.marginals[mode - 1][i] += u.delta as f64;
        }
        Ok(())
    }

    pub fn update(&mut self, u: &StreamUpdate) -> Result<()> {
        self.check(u)?;
        self.update_p(u)?;
        self.update_q(u)
    }

    /// Ends the stream; later updates are rejected.
    pub fn finalize(&mut self) {
        self.finalized = true;
    }

    /// Sketch of the product of marginal counts, built mode by mode.
    pub fn tensorize_q(&self) -> Result<Vec<f64>> {
        if !self.finalized {
            return Err(Error::StreamState("tensorization requires a finalized stream"));
        }
        let mut v = vec![1.0];
        for buckets in &self.q_sketch {
            let mut next = Vec::with_capacity(v.len() * buckets.len());
            for &a in buckets {
                next.extend(v.iter().map(|x| a * x));
            }
            v = next;
        }
        Ok(v)
    }

    /// `m^{q-1} Pi P^f - Pi Q^f`, the sketch of `m^q (P - Q)`.
    pub fn combined_sketch(&self) -> Result<Vec<f64>> {
        let qv = self.tensorize_q()?;
        let scale = self.m.powi(self.config.q as i32 - 1);
        Ok(self.p.iter().zip(&qv).map(|(p, q)| scale * p - q).collect())
    }

    /// Rough bound on `||m^q (P - Q)||_1` from the Cauchy sketch of the same combination.
    pub fn rough_m_hat(&self) -> Result<f64> {
        let d = self.config.d as u64;
        let q = self.config.q as u32;
        let tuples = d
            .checked_pow(q)
            .filter(|&t| t <= MAX_TUPLES)
            .ok_or_else(|| Error::TooLarge(format!("{d}^{q} tuples for the rough estimate")))?;
        let mut acc = vec![0.0; self.rough.rows()];
        let mut idx = vec![0usize; self.config.q];
        for key in 0..tuples {
            let mut rem = key;
            for slot in idx.iter_mut() {
                *slot = (rem % d) as usize;
                rem /= d;
            }
            let w: f64 = idx.iter().enumerate().map(|(k, &i)| self.marginals[k][i]).product();
            if w != 0.0 {
                for (r, a) in acc.iter_mut().enumerate() {
                    *a += w * self.rough.entry(r, key);
                }
            }
        }
        let scale = self.m.powi(self.config.q as i32 - 1);
        let mut rows: Vec<f64> = self
            .rough
            .accumulators()
            .iter()
            .zip(&acc)
            .map(|(p, q)| (scale * p - q).abs())
            .collect();
        Ok(2.0 * median_in_place(&mut rows))
    }

    /// Length of the sketch at `mode` (`t_mode`, with `t_0 = 1`).
    pub fn sketch_len(&self, mode: usize) -> usize {
        if mode == 0 {
            1
        } else {
            self.schedule.modes[mode - 1].len
        }
    }

    fn cell_values(&self, mode: usize, rep: usize, v: &[f64], rng: &mut Rng) -> Vec<f64> {
        let layout = &self.layouts[mode - 1][rep];
        let cells = layout.total_cells();
        let sub = self.sketch_len(mode - 1);
        let base = rep * cells;
        (0..cells)
            .map(|g| {
                let start = (base + g) * sub;
                self.decode_inner(mode - 1, &v[start..start + sub], rng)
            })
            .collect()
    }

    /// Self-bounded `M_hat`: twice the largest level-0 row sum of bucket values.
    fn inner_m_hat(layout: &ShhLayout, cells: &[f64]) -> f64 {
        let h = layout.hashing(0);
        (0..h.reps())
            .map(|r| cells[r * h.buckets()..(r + 1) * h.buckets()].iter().sum::<f64>())
            .fold(0.0, f64::max)
            * 2.0
    }

    fn decode_inner(&self, mode: usize, v: &[f64], rng: &mut Rng) -> f64 {
        if mode == 0 {
            return v[0].abs();
        }
        let mut z: Vec<f64> = (0..self.layouts[mode - 1].len())
            .map(|r| {
                let cells = self.cell_values(mode, r, v, rng);
                let layout = &self.layouts[mode - 1][r];
                let m_hat = Self::inner_m_hat(layout, &cells);
                let zeta = rng.uniform_range(0.5, 1.0);
                if m_hat > 0.0 {
                    estimate_with_derived(layout, &self.derived[mode - 1], m_hat, zeta, |c| cells[c])
                        .map_or(0.0, |e| e.total)
                } else {
                    0.0
                }
            })
            .collect();
        median_in_place(&mut z)
    }

    fn check_len(&self, mode: usize, v: &[f64]) -> Result<()> {
        if mode == 0 || mode > self.config.q {
            return Err(Error::InvalidParameter(format!("mode must lie in 1..={}", self.config.q)));
        }
        crate::error::check_dim(self.sketch_len(mode), v.len())
    }

    /// Estimate of the l1 norm of the tensor sketched by `v` at `mode`, with
    /// every level choosing its own `M_hat`.
    pub fn decode(&self, mode: usize, v: &[f64], rng: &mut Rng) -> Result<f64> {
        self.check_len(mode, v)?;
        Ok(self.decode_inner(mode, v, rng))
    }

    /// As [`Self::decode`] but with the given `M_hat` at `mode`.
    pub fn decode_with_m_hat(&self, mode: usize, v: &[f64], m_hat: f64, rng: &mut Rng) -> Result<f64> {
        self.check_len(mode, v)?;
        let mut z = Vec::with_capacity(self.layouts[mode - 1].len());
        for r in 0..self.layouts[mode - 1].len() {
            let cells = self.cell_values(mode, r, v, rng);
            let zeta = rng.uniform_range(0.5, 1.0);
            let e = estimate_with_derived(&self.layouts[mode - 1][r], &self.derived[mode - 1], m_hat, zeta, |c| {
                cells[c]
            })?;
            z.push(e.total);
        }
        Ok(median_in_place(&mut z))
    }

    /// Estimate of `||P - Q||_1` using the state's seed for decoding.
    pub fn estimate_tvd(&self) -> Result<TvdEstimate> {
        self.estimate_tvd_with(&mut Rng::new(self.seed, DECODE_STREAM))
    }

    pub fn estimate_tvd_with(&self, rng: &mut Rng) -> Result<TvdEstimate> {
        if !self.finalized {
            return Err(Error::StreamState("estimation requires a finalized stream"));
        }
        if self.m == 0.0 {
            return Err(Error::EmptyInput);
        }
        if self.m < 0.0 {
            return Err(Error::InvalidParameter(format!("stream length is negative: {}", self.m)));
        }
        let q = self.config.q;
        let norm = self.m.powi(q as i32);
        let m_hat = self.rough_m_hat()?;
        if m_hat == 0.0 {
            return Ok(TvdEstimate {
                estimate: 0.0,
                m: self.m,
                m_hat: 0.0,
                grid: Vec::new(),
            });
        }
        let combined = self.combined_sketch()?;
        let top = &self.schedule.modes[q - 1];
        let cells: Vec<Vec<f64>> = (0..top.reps).map(|r| self.cell_values(q, r, &combined, rng)).collect();
        let mut grid = Vec::new();
        let mut k = 2u64;
        while k <= self.config.k {
            let dv = self.config.mode_config(top.eps, k).derive()?;
            let mut z = Vec::with_capacity(top.reps);
            for (r, cv) in cells.iter().enumerate() {
                let zeta = rng.uniform_range(0.5, 1.0);
                z.push(estimate_with_derived(&self.layouts[q - 1][r], &dv, m_hat, zeta, |c| cv[c])?.total);
            }
            grid.push((k, median_in_place(&mut z) / norm));
            k *= 2;
        }
        let estimate = grid.iter().map(|g| g.1).fold(0.0, f64::max);
        Ok(TvdEstimate {
            estimate,
            m: self.m,
            m_hat: m_hat / norm,
            grid,
        })
    }

    pub fn space(&self) -> SpaceReport {
        let modes = &self.schedule.modes;
        SpaceReport {
            p_accumulators: self.p.len(),
            q_accumulators: self.q_sketch.iter().map(Vec::len).sum(),
            marginal_counters: self.config.q * self.config.d,
            rough_rows: self.rough.rows(),
            tower_total: modes.iter().map(|m| m.block() * m.payload_len).sum(),
            max_touched_per_update: modes.iter().map(|m| m.reps * (m.l_hat + 1) * m.hh_reps).product(),
        }
    }
}
