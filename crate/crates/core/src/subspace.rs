//! Random-boundary M-sketch subspace embedding, the dense Cauchy embedding and
//! their composition.
//!
//! An M-sketch stacks a level-0 CountSketch over all coordinates with one
//! CountSketch per subsampling level `h`, where level `h` keeps each
//! coordinate independently with probability `p_h = B^-(u+h-1)` and rescales
//! survivors by `1/p_h`. One sign table is shared by every level, and level
//! hashes are keyed by the original coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{sample_cauchy, DenseMatrix, Rng};
use crate::LinearSketch;

/// Stream ids for the independent pieces of an M-sketch.
const STREAM_SHIFT: u64 = 1;
const STREAM_SIGNS: u64 = 2;
const STREAM_LEVEL0: u64 = 3;
const STREAM_SURVIVORS: u64 = 0x100;
const STREAM_LEVEL_HASH: u64 = 0x200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    Paper,
    Calibrated,
}

/// Constants of the M-sketch.
///
/// In paper mode `n0` holds the level-0 bucket count without its `B^u`
/// factor, because `u` is only drawn at build time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MSketchConfig {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub h_max: usize,
    pub q_max: f64,
    pub alpha_net: f64,
    pub m_crowd: f64,
    pub branching: f64,
    pub n0: f64,
    pub n_level: f64,
    pub scale_mode: ScaleMode,
}

/// `ceil(x)` that does not round exact integers up because of float noise.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {x}")))
    }
}

/// Computes every constant from its closed form. `log` without a base is natural.
pub fn derive_constants(n: usize, d: usize, eps: f64, delta: f64) -> Result<MSketchConfig> {
    check_unit("eps", eps)?;
    check_unit("delta", delta)?;
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    let (nf, df) = (n as f64, d as f64);
    let h_max = ceil_tol((nf / eps).log2()).max(1.0);
    let q_max = (nf * df * h_max / (delta * eps)).log2();
    let log_alpha = std::f64::consts::LN_2 + df * (3.0 / eps).ln() + q_max.ln() - delta.ln();
    let alpha_net = log_alpha.exp();
    if !alpha_net.is_finite() {
        return Err(Error::Overflow {
            what: "alpha",
            detail: format!("ln(alpha) = {log_alpha:.1}"),
        });
    }
    let m_crowd = 300.0 * df.powi(11) / (eps.powi(9) * delta.powi(4)) * nf.ln().powi(5);
    let log_b = df / (delta * eps) * (m_crowd * h_max * q_max / delta).ln();
    let branching = log_b.exp();
    if !branching.is_finite() {
        return Err(Error::Overflow {
            what: "B",
            detail: format!("ln(B) = {log_b:.1} exceeds the f64 range; use calibrated mode"),
        });
    }
    let n0 = 12.0 * q_max / eps.powi(3) * log_alpha;
    let n_level = branching * 8.0 * df * df * df.ln() / eps.powi(6)
        * q_max
        * log_alpha
        * (branching / eps).ln();
    Ok(MSketchConfig {
        n,
        d,
        eps,
        delta,
        h_max: h_max as usize,
        q_max,
        alpha_net,
        m_crowd,
        branching,
        n0,
        n_level,
        scale_mode: ScaleMode::Paper,
    })
}

impl MSketchConfig {
    /// User-chosen branching factor, bucket counts and level count.
    pub fn calibrated(
        n: usize,
        d: usize,
        branching: f64,
        n0: usize,
        n_level: usize,
        h_max: usize,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter("n and d must be positive".into()));
        }
        if !(branching > 1.0) || !branching.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "branching factor must exceed 1, got {branching}"
            )));
        }
        if n0 == 0 || (h_max > 0 && n_level == 0) {
            return Err(Error::InvalidParameter("bucket counts must be positive".into()));
        }
        Ok(Self {
            n,
            d,
            eps: f64::NAN,
            delta: f64::NAN,
            h_max,
            q_max: f64::NAN,
            alpha_net: f64::NAN,
            m_crowd: f64::NAN,
            branching,
            n0: n0 as f64,
            n_level: n_level as f64,
            scale_mode: ScaleMode::Calibrated,
        })
    }

    /// Bucket counts for a given shift `u`.
    fn bucket_counts(&self, u: f64) -> Result<(usize, usize)> {
        let n0 = match self.scale_mode {
            ScaleMode::Paper => ceil_tol(self.branching.powf(u) * self.n0),
            ScaleMode::Calibrated => self.n0,
        };
        let n_level = ceil_tol(self.n_level).max(1.0);
        let cap = (1u64 << 32) as f64;
        if n0 > cap || n_level > cap {
            return Err(Error::TooLarge(format!(
                "bucket counts N0 = {n0:e}, N = {n_level:e}"
            )));
        }
        Ok((n0.max(1.0) as usize, n_level as usize))
    }
}

/// `p_h = B^-(u+h-1)` for `h = 1..=h_max`.
pub fn sample_rates(u: f64, branching: f64, h_max: usize) -> Vec<f64> {
    (1..=h_max)
        .map(|h| branching.powf(-(u + h as f64 - 1.0)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    rate: f64,
    /// Surviving original coordinates in increasing order.
    survivors: Vec<u32>,
    buckets: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MSketchOp {
    n: usize,
    u: f64,
    n0: usize,
    n_level: usize,
    signs: Vec<f64>,
    level0: Vec<u32>,
    levels: Vec<Level>,
}

impl MSketchOp {
    /// Builds an M-sketch, drawing the shift `u` uniformly from [0, 1].
    pub fn build(rng: &mut Rng, config: &MSketchConfig) -> Result<Self> {
        let u = rng.derive(STREAM_SHIFT).uniform();
        Self::build_with_shift(rng, config, u)
    }

    /// Builds an M-sketch with a fixed shift. `u = 1` gives the deterministic rates `B^-h`.
    pub fn build_with_shift(rng: &mut Rng, config: &MSketchConfig, u: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidParameter(format!("shift must lie in [0, 1], got {u}")));
        }
        let (n0, n_level) = config.bucket_counts(u)?;
        let n = config.n;
        if n > u32::MAX as usize {
            return Err(Error::TooLarge(format!("input dimension {n}")));
        }
        let mut sign_rng = rng.derive(STREAM_SIGNS);
        let signs = (0..n).map(|_| sign_rng.sign()).collect();
        let mut h0 = rng.derive(STREAM_LEVEL0);
        let level0 = (0..n).map(|_| h0.below(n0) as u32).collect();
        let levels = sample_rates(u, config.branching, config.h_max)
            .into_iter()
            .enumerate()
            .map(|(h, rate)| {
                let mut pick = rng.derive(STREAM_SURVIVORS + h as u64);
                let mut hash = rng.derive(STREAM_LEVEL_HASH + h as u64);
                let survivors: Vec<u32> = (0..n as u32).filter(|_| pick.bernoulli(rate)).collect();
                let buckets = survivors.iter().map(|_| hash.below(n_level) as u32).collect();
                Level {
                    rate,
                    survivors,
                    buckets,
                }
            })
            .collect();
        Ok(Self {
            n,
            u,
            n0,
            n_level,
            signs,
            level0,
            levels,
        })
    }

    pub fn shift(&self) -> f64 {
        self.u
    }

    pub fn rates(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.rate).collect()
    }

    pub fn h_max(&self) -> usize {
        self.levels.len()
    }

    pub fn level0_buckets(&self) -> usize {
        self.n0
    }

    pub fn level_buckets(&self) -> usize {
        self.n_level
    }

    /// Surviving coordinates at level `h` (1-based).
    pub fn survivors(&self, h: usize) -> &[u32] {
        &self.levels[h - 1].survivors
    }

    /// Output rows occupied by block `h` (0 is the level-0 CountSketch).
    pub fn block_range(&self, h: usize) -> std::ops::Range<usize> {
        if h == 0 {
            0..self.n0
        } else {
            let start = self.n0 + (h - 1) * self.n_level;
            start..start + self.n_level
        }
    }

    fn accumulate_row(&self, out: &mut DenseMatrix, row: &[f64], i: usize, level_pos: &mut [usize]) {
        let s = self.signs[i];
        let b = self.level0[i] as usize;
        for (o, &x) in out.row_mut(b).iter_mut().zip(row) {
            *o += s * x;
        }
        for (h, level) in self.levels.iter().enumerate() {
            let pos = level_pos[h];
            if pos < level.survivors.len() && level.survivors[pos] as usize == i {
                level_pos[h] += 1;
                let w = s / level.rate;
                let b = self.n0 + h * self.n_level + level.buckets[pos] as usize;
                for (o, &x) in out.row_mut(b).iter_mut().zip(row) {
                    *o += w * x;
                }
            }
        }
    }
}

impl LinearSketch for MSketchOp {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.n0 + self.levels.len() * self.n_level
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        let mut out = vec![0.0; self.output_dim()];
        for (i, &x) in v.iter().enumerate() {
            out[self.level0[i] as usize] += self.signs[i] * x;
        }
        for (h, level) in self.levels.iter().enumerate() {
            let base = self.n0 + h * self.n_level;
            for (&i, &b) in level.survivors.iter().zip(&level.buckets) {
                out[base + b as usize] += self.signs[i as usize] * v[i as usize] / level.rate;
            }
        }
        Ok(out)
    }

    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.n, a.rows())?;
        let mut out = DenseMatrix::zeros(self.output_dim(), a.cols());
        let mut pos = vec![0usize; self.levels.len()];
        for i in 0..self.n {
            self.accumulate_row(&mut out, a.row(i), i, &mut pos);
        }
        Ok(out)
    }
}

/// Offset in the median of `sum |C_i| / r` over `r` standard Cauchys beyond
/// `(2/pi) ln r`, measured by simulation for `r` between `2^10` and `2^16`.
pub const DENSE_CAUCHY_OFFSET: f64 = 1.32;

/// `r x n` matrix of i.i.d. standard Cauchy entries, normalized so that a fixed
/// vector keeps its l1 norm in the median.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseCauchyOp {
    r: usize,
    n: usize,
    entries: Vec<f64>,
    calibration: f64,
}

impl DenseCauchyOp {
    pub fn build(rng: &mut Rng, r: usize, n: usize) -> Result<Self> {
        if r == 0 || n == 0 {
            return Err(Error::InvalidParameter("dense Cauchy needs r, n >= 1".into()));
        }
        let len = r
            .checked_mul(n)
            .filter(|&l| l <= 1 << 28)
            .ok_or_else(|| Error::TooLarge(format!("{r} x {n} dense Cauchy matrix")))?;
        let entries = sample_cauchy(rng, len);
        let ln_r = (r as f64).ln();
        let calibration = if r > 1 {
            ln_r / (ln_r + DENSE_CAUCHY_OFFSET)
        } else {
            1.0
        };
        Ok(Self {
            r,
            n,
            entries,
            calibration,
        })
    }

    /// Multiplicative correction applied on top of `1 / ((2/pi) r ln r)`.
    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    fn scale(&self) -> f64 {
        let r = self.r as f64;
        let ln_r = r.ln();
        if self.r > 1 {
            self.calibration / (std::f64::consts::FRAC_2_PI * r * ln_r)
        } else {
            1.0 / (std::f64::consts::FRAC_2_PI * DENSE_CAUCHY_OFFSET)
        }
    }
}

impl LinearSketch for DenseCauchyOp {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.r
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        let s = self.scale();
        Ok(self
            .entries
            .chunks_exact(self.n)
            .map(|row| s * row.iter().zip(v).map(|(c, x)| c * x).sum::<f64>())
            .collect())
    }

    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.n, a.rows())?;
        let s = self.scale();
        let mut out = DenseMatrix::zeros(self.r, a.cols());
        for (k, row) in self.entries.chunks_exact(self.n).enumerate() {
            let dst = out.row_mut(k);
            for (i, &c) in row.iter().enumerate() {
                for (o, &x) in dst.iter_mut().zip(a.row(i)) {
                    *o += c * x;
                }
            }
            dst.iter_mut().for_each(|x| *x *= s);
        }
        Ok(out)
    }
}

/// Dense Cauchy stage followed by an M-sketch.
#[derive(Clone, Debug)]
pub struct ComposedOp {
    pub first: DenseCauchyOp,
    pub second: MSketchOp,
}

pub fn compose(first: DenseCauchyOp, second: MSketchOp) -> Result<ComposedOp> {
    check_dim(first.output_dim(), second.input_dim())?;
    Ok(ComposedOp { first, second })
}

impl LinearSketch for ComposedOp {
    fn input_dim(&self) -> usize {
        self.first.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.second.output_dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.second.apply(&self.first.apply(v)?)
    }

    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.second.apply_matrix(&self.first.apply_matrix(a)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchKind {
    Msketch,
    Entrywise,
    DenseCauchy,
}

/// Optional parameter overrides carried by a descriptor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
}

/// Serializable recipe from which an operator is rebuilt exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchDescriptor {
    #[serde(rename = "type")]
    pub kind: SketchKind,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
    pub scale_mode: ScaleMode,
    #[serde(default)]
    pub overrides: Overrides,
}

impl SketchDescriptor {
    /// The M-sketch configuration this descriptor names.
    pub fn msketch_config(&self) -> Result<MSketchConfig> {
        match self.scale_mode {
            ScaleMode::Paper => derive_constants(self.n, self.d, self.eps, self.delta),
            ScaleMode::Calibrated => {
                let o = &self.overrides;
                let missing = |f: &str| Error::InvalidParameter(format!("calibrated mode needs `{f}`"));
                let mut c = MSketchConfig::calibrated(
                    self.n,
                    self.d,
                    o.branching.ok_or_else(|| missing("branching"))?,
                    o.n0.ok_or_else(|| missing("n0"))?,
                    o.n_level.ok_or_else(|| missing("n_level"))?,
                    o.h_max.ok_or_else(|| missing("h_max"))?,
                )?;
                c.eps = self.eps;
                c.delta = self.delta;
                Ok(c)
            }
        }
    }

    pub fn build_msketch(&self) -> Result<MSketchOp> {
        MSketchOp::build(&mut Rng::new(self.seed, 0), &self.msketch_config()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{l1_norm, median};

    fn cal(n: usize, b: f64, n0: usize, nl: usize, h: usize) -> MSketchConfig {
        MSketchConfig::calibrated(n, 3, b, n0, nl, h).unwrap()
    }

    #[test]
    fn h_max_at_two_to_twenty() {
        let c = derive_constants(1 << 20, 1, 0.5, 0.5).unwrap();
        assert_eq!(c.h_max, 21);
    }

    #[test]
    fn small_instance_constants() {
        let c = derive_constants(2, 1, 0.5, 0.5).unwrap();
        assert_eq!(c.h_max, 2);
        assert!(c.q_max >= 1.0);
        assert!((c.q_max - 4.0).abs() < 1e-12);
        assert!(c.branching > 1.0 && c.branching.is_finite());
    }

    #[test]
    fn overflow_at_d4() {
        let err = derive_constants(1 << 20, 4, 0.5, 0.5).unwrap_err();
        match err {
            Error::Overflow { what, .. } => assert_eq!(what, "B"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rates_formula() {
        assert_eq!(sample_rates(0.0, 7.0, 1)[0], 1.0);
        assert!((sample_rates(1.0, 7.0, 1)[0] - 1.0 / 7.0).abs() < 1e-15);
        let p = sample_rates(0.37, 5.0, 6);
        for w in p.windows(2) {
            assert!((w[1] / w[0] - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_levels_is_a_countsketch() {
        let op = MSketchOp::build(&mut Rng::new(1, 0), &cal(40, 2.0, 8, 1, 0)).unwrap();
        assert_eq!(op.output_dim(), 8);
        let v: Vec<f64> = (0..40).map(|i| i as f64 - 20.0).collect();
        assert!(l1_norm(&op.apply(&v).unwrap()) <= l1_norm(&v));
    }

    #[test]
    fn survivor_counts_are_binomial() {
        let n = 2000;
        let config = cal(n, 2.0, 4, 64, 4);
        for seed in 0..100 {
            let op = MSketchOp::build(&mut Rng::new(seed, 0), &config).unwrap();
            for (h, p) in op.rates().into_iter().enumerate() {
                let mean = n as f64 * p;
                let sd = (n as f64 * p * (1.0 - p)).sqrt();
                let got = op.survivors(h + 1).len() as f64;
                assert!((got - mean).abs() <= 5.0 * sd.max(1e-9), "seed {seed} level {h}");
            }
        }
    }

    #[test]
    fn same_seed_same_operator() {
        let config = cal(100, 3.0, 4, 16, 3);
        let a = MSketchOp::build(&mut Rng::new(5, 0), &config).unwrap();
        let b = MSketchOp::build(&mut Rng::new(5, 0), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_in_zero_out() {
        let op = MSketchOp::build(&mut Rng::new(2, 0), &cal(10, 2.0, 3, 5, 2)).unwrap();
        let out = op.apply_matrix(&DenseMatrix::zeros(10, 2)).unwrap();
        assert!(out.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn unshifted_first_level_is_plain_countsketch() {
        let config = cal(1, 2.0, 1, 4, 1);
        let op = MSketchOp::build_with_shift(&mut Rng::new(3, 0), &config, 0.0).unwrap();
        let a = DenseMatrix::from_rows(&[vec![2.5, -1.0]]).unwrap();
        let out = op.apply_matrix(&a).unwrap();
        let block: Vec<f64> = op.block_range(1).flat_map(|r| out.row(r).to_vec()).collect();
        assert_eq!(l1_norm(&block), 3.5);
    }

    #[test]
    fn unit_vector_two_outcome_law() {
        let config = cal(5, 3.0, 2, 4, 3);
        for seed in 0..50 {
            let op = MSketchOp::build(&mut Rng::new(seed, 0), &config).unwrap();
            let out = op.apply(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            for (h, p) in op.rates().into_iter().enumerate() {
                let mass = l1_norm(&out[op.block_range(h + 1)]);
                let sampled = op.survivors(h + 1).first() == Some(&0);
                let expect = if sampled { 1.0 / p } else { 0.0 };
                assert!((mass - expect).abs() <= 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn matrix_and_vector_application_agree() {
        let mut rng = Rng::new(4, 0);
        let a = DenseMatrix::from_fn(50, 3, |_, _| rng.normal());
        let op = MSketchOp::build(&mut rng, &cal(50, 2.0, 5, 9, 3)).unwrap();
        let sa = op.apply_matrix(&a).unwrap();
        for j in 0..3 {
            let col = op.apply(&a.column(j)).unwrap();
            for (x, y) in col.iter().zip(sa.column(j)) {
                assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn sampling_blocks_are_unbiased() {
        let n = 20;
        let v: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let truth = l1_norm(&v);
        let trials = 10_000;
        let config = cal(n, 2.0, 1, 1 << 12, 3);
        let mut sums = vec![0.0; 3];
        let mut sq = vec![0.0; 3];
        for seed in 0..trials {
            let op = MSketchOp::build(&mut Rng::new(seed, 9), &config).unwrap();
            for h in 1..=3 {
                let mass: f64 = op
                    .survivors(h)
                    .iter()
                    .map(|&i| v[i as usize].abs() / op.rates()[h - 1])
                    .sum();
                sums[h - 1] += mass;
                sq[h - 1] += mass * mass;
            }
        }
        for h in 0..3 {
            let mean = sums[h] / trials as f64;
            let se = ((sq[h] / trials as f64 - mean * mean) / trials as f64).sqrt();
            assert!((mean - truth).abs() <= 3.0 * se, "level {}: {mean} vs {truth}", h + 1);
        }
    }

    #[test]
    fn calibrated_no_contraction_in_most_trials() {
        // Calibrated desk-scale configuration; eps_cal = 0.2.
        let config = cal(1000, 2.0, 1, 1 << 12, 1);
        let trials = 1000;
        let mut good = 0;
        for t in 0..trials {
            let mut rng = Rng::new(t, 17);
            let a = DenseMatrix::from_fn(1000, 3, |_, _| rng.normal());
            let op = MSketchOp::build(&mut rng, &config).unwrap();
            let sa = op.apply_matrix(&a).unwrap();
            let mut min_ratio = f64::INFINITY;
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
                let r = l1_norm(&sa.mul_vec(&x).unwrap()) / l1_norm(&a.mul_vec(&x).unwrap());
                min_ratio = min_ratio.min(r);
            }
            if min_ratio >= 0.8 {
                good += 1;
            }
        }
        assert!(good >= 950, "{good} / {trials}");
    }

    #[test]
    fn dense_cauchy_normalization() {
        let r = 1 << 14;
        let c = 3.5;
        let a = DenseMatrix::from_rows(&[vec![c]]).unwrap();
        let ratios: Vec<f64> = (0..51)
            .map(|seed| {
                let op = DenseCauchyOp::build(&mut Rng::new(seed, 0), r, 1).unwrap();
                l1_norm(&op.apply_matrix(&a).unwrap().column(0)) / c
            })
            .collect();
        let m = median(&ratios);
        assert!((m - 1.0).abs() <= 0.15, "median ratio {m}");
    }

    #[test]
    fn dense_cauchy_zero_and_linear() {
        let mut rng = Rng::new(6, 0);
        let op = DenseCauchyOp::build(&mut rng, 64, 10).unwrap();
        assert!(op.apply(&[0.0; 10]).unwrap().iter().all(|x| *x == 0.0));
        let u: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (su, sv, sm) = (op.apply(&u).unwrap(), op.apply(&v).unwrap(), op.apply(&mix).unwrap());
        for k in 0..64 {
            let rhs = 2.0 * su[k] - 0.5 * sv[k];
            assert!((sm[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn composition_rules() {
        let mut rng = Rng::new(7, 0);
        let dense = DenseCauchyOp::build(&mut rng, 32, 200).unwrap();
        assert!(compose(dense.clone(), MSketchOp::build(&mut rng, &cal(31, 2.0, 4, 4, 1)).unwrap()).is_err());

        // Level-0 only with N0 = r and an injective hash reduces to the dense stage.
        let mut injective = MSketchOp::build(&mut Rng::new(1, 1), &cal(32, 2.0, 32, 1, 0)).unwrap();
        injective.level0 = (0..32).rev().collect();
        let composed = compose(dense.clone(), injective).unwrap();
        let a = DenseMatrix::from_fn(200, 2, |_, _| rng.normal());
        let x = [0.3, -1.2];
        let lhs = l1_norm(&composed.apply_matrix(&a).unwrap().mul_vec(&x).unwrap());
        let rhs = l1_norm(&dense.apply_matrix(&a).unwrap().mul_vec(&x).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * rhs);

        // Matrix then vector equals vector chain.
        let second = MSketchOp::build(&mut rng, &cal(32, 2.0, 4, 16, 2)).unwrap();
        let composed = compose(dense, second).unwrap();
        let via_matrix = composed.apply_matrix(&a).unwrap().mul_vec(&x).unwrap();
        let via_vector = composed.apply(&a.mul_vec(&x).unwrap()).unwrap();
        for (p, q) in via_matrix.iter().zip(&via_vector) {
            assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn two_stage_distortion_is_bounded_by_sparse_stage() {
        let mut rng = Rng::new(8, 0);
        let a = DenseMatrix::from_fn(300, 3, |_, _| rng.normal());
        let dense = DenseCauchyOp::build(&mut rng, 256, 300).unwrap();
        let sparse = MSketchOp::build(&mut rng, &cal(256, 2.0, 1, 1 << 12, 1)).unwrap();
        let da = dense.apply_matrix(&a).unwrap();
        let sda = sparse.apply_matrix(&da).unwrap();
        let mut ratios = Vec::new();
        let xs: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        for x in &xs {
            ratios.push(l1_norm(&sda.mul_vec(x).unwrap()) / l1_norm(&da.mul_vec(x).unwrap()));
        }
        let sparse_max = ratios.iter().cloned().fold(0.0, f64::max);
        for x in &xs {
            let lhs = l1_norm(&sda.mul_vec(x).unwrap());
            let rhs = l1_norm(&da.mul_vec(x).unwrap()) * sparse_max;
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn descriptor_round_trip_rebuilds_operator() {
        let desc = SketchDescriptor {
            kind: SketchKind::Msketch,
            n: 64,
            d: 3,
            eps: 0.5,
            delta: 0.5,
            seed: 11,
            scale_mode: ScaleMode::Calibrated,
            overrides: Overrides {
                branching: Some(2.0),
                n0: Some(4),
                n_level: Some(32),
                h_max: Some(2),
                ..Default::default()
            },
        };
        let json = serde_json::to_string(&desc).unwrap();
        assert!(json.contains("\"type\":\"msketch\""));
        let back: SketchDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, desc);
        assert_eq!(back.build_msketch().unwrap(), desc.build_msketch().unwrap());
    }

    #[test]
    fn construction_never_reads_input() {
        let config = cal(30, 2.0, 3, 8, 2);
        let op = MSketchOp::build(&mut Rng::new(12, 0), &config).unwrap();
        let mut rng = Rng::new(0, 0);
        let a1 = DenseMatrix::from_fn(30, 2, |_, _| rng.normal());
        let a2 = DenseMatrix::from_fn(30, 2, |_, _| rng.normal());
        let _ = (op.apply_matrix(&a1).unwrap(), op.apply_matrix(&a2).unwrap());
        assert_eq!(op, MSketchOp::build(&mut Rng::new(12, 0), &config).unwrap());
    }
}
