//! CountSketch-style heavy-hitter structure over vector-valued items.
//!
//! Each of `R` repetitions hashes the `d` items into `B` buckets with random
//! signs. A bucket accumulates the signed payloads of its items, where the
//! payload of an update is either the raw value (scalar items), a Cauchy
//! sketch `T x` of a vector item, or any other linear sketch supplied by the
//! caller. An item is estimated by applying a subrecovery function to each of
//! its buckets and taking the median over repetitions.
//!
//! Hashing and storage are kept apart so that several accumulators (for
//! example a vector-payload and a scalar-payload copy) can share one set of
//! hash functions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{median_in_place, sample_cauchy, Rng};

/// Upper limit on allocated accumulator cells for one structure.
pub const MAX_CELLS: usize = 1 << 28;

/// Length and accuracy of the per-bucket Cauchy sketch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub gamma: f64,
    pub zeta: f64,
    /// Constant `c` in `t = c * gamma^-2 * ln(1/zeta)`.
    pub c: f64,
}

impl BaseParams {
    pub const DEFAULT_C: f64 = 8.0;

    pub fn new(gamma: f64, zeta: f64) -> Self {
        Self {
            gamma,
            zeta,
            c: Self::DEFAULT_C,
        }
    }

    pub fn len(&self) -> usize {
        (self.c / (self.gamma * self.gamma) * (1.0 / self.zeta).ln()).ceil().max(1.0) as usize
    }
}

/// `t x m` Cauchy map whose median-of-absolute-values recovers `||x||_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseL1Sketch {
    m: usize,
    params: BaseParams,
    rows: Vec<f64>,
}

impl BaseL1Sketch {
    pub fn build(rng: &mut Rng, m: usize, params: BaseParams) -> Result<Self> {
        for (name, x) in [("gamma", params.gamma), ("zeta", params.zeta)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {x}")));
            }
        }
        if m == 0 {
            return Err(Error::InvalidParameter("base sketch needs m >= 1".into()));
        }
        let t = params.len();
        if t > 64 * m {
            return Err(Error::DegenerateBaseSketch { t, m });
        }
        Ok(Self {
            m,
            params,
            rows: sample_cauchy(rng, t * m),
        })
    }

    pub fn input_len(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.m
    }

    pub fn params(&self) -> BaseParams {
        self.params
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.m, x.len())?;
        Ok(self
            .rows
            .chunks_exact(self.m)
            .map(|row| row.iter().zip(x).map(|(c, v)| c * v).sum())
            .collect())
    }

    /// Median of absolute coordinates; the median of `|Cauchy|` is 1.
    pub fn estimate(sketched: &[f64]) -> f64 {
        if sketched.is_empty() {
            return 0.0;
        }
        let mut v: Vec<f64> = sketched.iter().map(|x| x.abs()).collect();
        median_in_place(&mut v)
    }
}

/// Heaviness threshold, failure probability and bucket sizing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhParams {
    pub theta: f64,
    pub delta: f64,
    /// Constant in `B = c_B * theta^-4`.
    pub c_b: f64,
    /// Replaces the formula bucket count when set.
    pub buckets: Option<usize>,
    /// Replaces `ceil(ln(d/delta))` repetitions when set.
    pub reps: Option<usize>,
}

impl HhParams {
    pub const DEFAULT_C_B: f64 = 8.0;

    pub fn new(theta: f64, delta: f64) -> Self {
        Self {
            theta,
            delta,
            c_b: Self::DEFAULT_C_B,
            buckets: None,
            reps: None,
        }
    }

    pub fn with_buckets(mut self, b: usize) -> Self {
        self.buckets = Some(b);
        self
    }

    pub fn with_reps(mut self, r: usize) -> Self {
        self.reps = Some(r);
        self
    }

    /// `(buckets, reps)` for `d` items.
    pub fn sizes(&self, d: usize) -> Result<(usize, usize)> {
        let buckets = match self.buckets {
            Some(b) => b,
            None => {
                let b = (self.c_b * self.theta.powi(-4)).ceil();
                if b > MAX_CELLS as f64 {
                    return Err(Error::TooLarge(format!(
                        "{b:e} buckets at theta = {}; supply a bucket override",
                        self.theta
                    )));
                }
                b as usize
            }
        };
        let reps = match self.reps {
            Some(r) => r,
            None => ((d as f64 / self.delta).ln().ceil() as usize).max(1),
        };
        if buckets == 0 || reps == 0 {
            return Err(Error::InvalidParameter("bucket and repetition counts must be positive".into()));
        }
        Ok((buckets, reps))
    }

    fn validate(&self) -> Result<()> {
        let third = 1.0 / 3.0;
        if !(self.theta > 0.0 && self.theta < third) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1/3), got {}", self.theta)));
        }
        if !(self.delta > 0.0 && self.delta < third) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1/3), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Bucket and sign tables for `reps` repetitions over `d` items.
#[derive(Clone, Debug, PartialEq)]
pub struct HhHashing {
    d: usize,
    reps: usize,
    buckets: usize,
    bucket_of: Vec<u32>,
    sign_of: Vec<f64>,
}

impl HhHashing {
    pub fn build(rng: &mut Rng, d: usize, params: &HhParams) -> Result<Self> {
        params.validate()?;
        let (buckets, reps) = params.sizes(d)?;
        Self::with_sizes(rng, d, buckets, reps)
    }

    pub fn with_sizes(rng: &mut Rng, d: usize, buckets: usize, reps: usize) -> Result<Self> {
        if d == 0 || buckets == 0 || reps == 0 {
            return Err(Error::InvalidParameter("empty heavy-hitter shape".into()));
        }
        if buckets > u32::MAX as usize {
            return Err(Error::TooLarge(format!("{buckets} buckets")));
        }
        let bucket_of = (0..reps * d).map(|_| rng.below(buckets) as u32).collect();
        let sign_of = (0..reps * d).map(|_| rng.sign()).collect();
        Ok(Self {
            d,
            reps,
            buckets,
            bucket_of,
            sign_of,
        })
    }

    pub fn items(&self) -> usize {
        self.d
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Number of (repetition, bucket) cells.
    pub fn cells(&self) -> usize {
        self.reps * self.buckets
    }

    #[inline]
    pub fn bucket(&self, rep: usize, i: usize) -> usize {
        self.bucket_of[rep * self.d + i] as usize
    }

    #[inline]
    pub fn sign(&self, rep: usize, i: usize) -> f64 {
        self.sign_of[rep * self.d + i]
    }

    /// Cell index of item `i` in repetition `rep`.
    #[inline]
    pub fn cell(&self, rep: usize, i: usize) -> usize {
        rep * self.buckets + self.bucket(rep, i)
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i < self.d {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, dim: self.d })
        }
    }

    /// Median over repetitions of `cell_value(cell of i)`.
    pub fn query_with(&self, i: usize, mut cell_value: impl FnMut(usize) -> f64) -> f64 {
        let mut v: Vec<f64> = (0..self.reps).map(|r| cell_value(self.cell(r, i))).collect();
        median_in_place(&mut v)
    }
}

/// Accumulators for one hashing layout: `cells * payload_len` values.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyHitter {
    hashing: HhHashing,
    payload_len: usize,
    acc: Vec<f64>,
}

impl HeavyHitter {
    pub fn new(hashing: HhHashing, payload_len: usize) -> Result<Self> {
        let cells = hashing
            .cells()
            .checked_mul(payload_len)
            .filter(|&c| c <= MAX_CELLS && payload_len > 0)
            .ok_or_else(|| Error::TooLarge(format!("{} cells x {payload_len}", hashing.cells())))?;
        Ok(Self {
            hashing,
            payload_len,
            acc: vec![0.0; cells],
        })
    }

    pub fn hashing(&self) -> &HhHashing {
        &self.hashing
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.acc
    }

    pub fn payload(&self, cell: usize) -> &[f64] {
        &self.acc[cell * self.payload_len..(cell + 1) * self.payload_len]
    }

    /// Adds `sign * payload` into every repetition's bucket for item `i`.
    pub fn update_payload(&mut self, i: usize, payload: &[f64]) -> Result<()> {
        self.hashing.check_item(i)?;
        check_dim(self.payload_len, payload.len())?;
        for r in 0..self.hashing.reps {
            let s = self.hashing.sign(r, i);
            let c = self.hashing.cell(r, i);
            let dst = &mut self.acc[c * self.payload_len..(c + 1) * self.payload_len];
            for (a, &p) in dst.iter_mut().zip(payload) {
                *a += s * p;
            }
        }
        Ok(())
    }

    pub fn update_scalar(&mut self, i: usize, delta: f64) -> Result<()> {
        self.update_payload(i, &[delta])
    }

    /// Median over repetitions of `subrecover(bucket payload)`.
    pub fn query_with(&self, i: usize, subrecover: impl Fn(&[f64]) -> f64) -> Result<f64> {
        self.hashing.check_item(i)?;
        Ok(self.hashing.query_with(i, |c| subrecover(self.payload(c))))
    }

    /// Scalar payloads with `f = |.|`.
    pub fn query_abs(&self, i: usize) -> Result<f64> {
        self.query_with(i, |p| p[0].abs())
    }

    pub fn query_all_with(&self, subrecover: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        // Evaluate each cell once.
        let values: Vec<f64> = (0..self.hashing.cells()).map(|c| subrecover(self.payload(c))).collect();
        (0..self.hashing.d)
            .map(|i| self.hashing.query_with(i, |c| values[c]))
            .collect()
    }

    /// Coordinate-wise sum of two structures that share hash functions.
    pub fn add_assign(&mut self, other: &HeavyHitter) -> Result<()> {
        if self.hashing != other.hashing || self.payload_len != other.payload_len {
            return Err(Error::InvalidParameter("structures do not share hash functions".into()));
        }
        self.acc.iter_mut().zip(&other.acc).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// A heavy-hitter structure whose buckets hold Cauchy sketches of vector items.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorHeavyHitter {
    pub base: BaseL1Sketch,
    pub table: HeavyHitter,
}

impl VectorHeavyHitter {
    pub fn build(rng: &mut Rng, d: usize, m: usize, hh: &HhParams, base: BaseParams) -> Result<Self> {
        let hashing = HhHashing::build(&mut rng.derive(1), d, hh)?;
        let base = BaseL1Sketch::build(&mut rng.derive(2), m, base)?;
        let table = HeavyHitter::new(hashing, base.len())?;
        Ok(Self { base, table })
    }

    pub fn update(&mut self, i: usize, delta: &[f64]) -> Result<()> {
        let t = self.base.apply(delta)?;
        self.table.update_payload(i, &t)
    }

    pub fn query(&self, i: usize) -> Result<f64> {
        self.table.query_with(i, BaseL1Sketch::estimate)
    }

    pub fn query_all(&self) -> Vec<f64> {
        self.table.query_all_with(BaseL1Sketch::estimate)
    }
}

/// Scalar heavy-hitter structure with `f = |.|`; the base sketch is the identity.
pub fn build_scalar(rng: &mut Rng, d: usize, hh: &HhParams) -> Result<HeavyHitter> {
    HeavyHitter::new(HhHashing::build(rng, d, hh)?, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l1_norm;

    #[test]
    fn base_recovers_scaled_unit_vector() {
        let mut ok = 0;
        for seed in 0..100 {
            let sk = BaseL1Sketch::build(&mut Rng::new(seed, 0), 16, BaseParams::new(0.2, 0.05)).unwrap();
            let mut x = vec![0.0; 16];
            x[0] = 5.0;
            let est = BaseL1Sketch::estimate(&sk.apply(&x).unwrap());
            if (4.0..=6.0).contains(&est) {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn base_zero_linear_and_degenerate() {
        let mut rng = Rng::new(1, 0);
        let sk = BaseL1Sketch::build(&mut rng, 20, BaseParams::new(0.3, 0.1)).unwrap();
        assert_eq!(BaseL1Sketch::estimate(&sk.apply(&[0.0; 20]).unwrap()), 0.0);
        let x: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let (tx, ty, txy) = (sk.apply(&x).unwrap(), sk.apply(&y).unwrap(), sk.apply(&xy).unwrap());
        for k in 0..tx.len() {
            assert!((txy[k] - tx[k] - ty[k]).abs() <= 1e-12 * (1.0 + txy[k].abs()));
        }
        let err = BaseL1Sketch::build(&mut rng, 1, BaseParams::new(0.1, 0.01)).unwrap_err();
        assert!(matches!(err, Error::DegenerateBaseSketch { .. }));
    }

    #[test]
    fn bucket_formula_and_repetitions() {
        let p = HhParams::new(0.25, 0.1);
        assert_eq!(p.sizes(100).unwrap().0, 8 * 256);
        assert_eq!(p.sizes(1).unwrap().1, (10f64).ln().ceil() as usize);
        assert!(HhHashing::build(&mut Rng::new(0, 0), 4, &HhParams::new(0.5, 0.1)).is_err());
        assert!(HhHashing::build(&mut Rng::new(0, 0), 4, &HhParams::new(0.1, 0.4)).is_err());
    }

    #[test]
    fn rebuild_same_hashing() {
        let p = HhParams::new(0.3, 0.1).with_buckets(16);
        assert_eq!(
            HhHashing::build(&mut Rng::new(3, 0), 50, &p).unwrap(),
            HhHashing::build(&mut Rng::new(3, 0), 50, &p).unwrap()
        );
    }

    #[test]
    fn update_and_undo() {
        let mut hh = build_scalar(&mut Rng::new(2, 0), 10, &HhParams::new(0.2, 0.1).with_buckets(4)).unwrap();
        hh.update_scalar(3, 2.5).unwrap();
        hh.update_scalar(7, -1.0).unwrap();
        hh.update_scalar(3, -2.5).unwrap();
        hh.update_scalar(7, 1.0).unwrap();
        assert!(hh.accumulators().iter().all(|x| x.abs() < 1e-12));
        assert!(hh.update_scalar(10, 1.0).is_err());
    }

    #[test]
    fn single_item_estimate_is_sign_invariant() {
        let mut rng = Rng::new(4, 0);
        let mut hh = VectorHeavyHitter::build(
            &mut rng,
            8,
            32,
            &HhParams::new(0.2, 0.1).with_buckets(4),
            BaseParams::new(0.3, 0.1),
        )
        .unwrap();
        let x: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
        hh.update(5, &x).unwrap();
        let direct = BaseL1Sketch::estimate(&hh.base.apply(&x).unwrap());
        for r in 0..hh.table.hashing().reps() {
            let c = hh.table.hashing().cell(r, 5);
            assert!((BaseL1Sketch::estimate(hh.table.payload(c)) - direct).abs() < 1e-12);
        }
        assert!((hh.query(5).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn forced_collision_cancels() {
        let p = HhParams::new(0.2, 0.1).with_buckets(1).with_reps(3);
        let mut hh = build_scalar(&mut Rng::new(5, 0), 2, &p).unwrap();
        // With one bucket both items always collide; pick values whose signed sum vanishes.
        let h = hh.hashing().clone();
        hh.update_scalar(0, 3.0).unwrap();
        hh.update_scalar(1, -h.sign(0, 0) * h.sign(0, 1) * 3.0).unwrap();
        let c = h.cell(0, 0);
        assert!(hh.payload(c)[0].abs() < 1e-12);
        assert!(hh.query_abs(0).unwrap() <= 6.0);
    }

    #[test]
    fn single_heavy_vector_item() {
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = Rng::new(seed, 6);
            let mut hh = VectorHeavyHitter::build(
                &mut rng,
                64,
                64,
                &HhParams::new(0.1, 0.1).with_buckets(16),
                BaseParams::new(0.1, 0.05),
            )
            .unwrap();
            let x: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
            let i = rng.below(64);
            hh.update(i, &x).unwrap();
            let est = hh.query(i).unwrap();
            let truth = l1_norm(&x);
            if (est - truth).abs() <= 0.3 * truth {
                ok += 1;
            }
        }
        assert!(ok >= 90, "{ok}");
    }

    #[test]
    fn zero_stream_zero_estimates() {
        let hh = build_scalar(&mut Rng::new(7, 0), 20, &HhParams::new(0.25, 0.1)).unwrap();
        assert!(hh.query_all_with(|p| p[0].abs()).iter().all(|x| *x == 0.0));
    }

    /// Planted item carrying `share` of the mass among `d` items.
    fn planted(rng: &mut Rng, d: usize, share: f64) -> (Vec<f64>, usize) {
        let heavy = rng.below(d);
        let mut x: Vec<f64> = (0..d).map(|_| -rng.uniform_open().ln()).collect();
        x[heavy] = 0.0;
        let rest: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v *= (1.0 - share) / rest);
        x[heavy] = share;
        for v in x.iter_mut() {
            *v *= rng.sign();
        }
        (x, heavy)
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn planted_item_is_top_one() {
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = Rng::new(seed, 8);
            let (x, heavy) = planted(&mut rng, 64, 0.5);
            let mut hh = build_scalar(&mut rng, 64, &HhParams::new(0.1, 0.05)).unwrap();
            for (i, &v) in x.iter().enumerate() {
                hh.update_scalar(i, v).unwrap();
            }
            if argmax(&hh.query_all_with(|p| p[0].abs())) == heavy {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn more_repetitions_never_fail_more() {
        let mut last = usize::MAX;
        for reps in [1, 3, 7, 15] {
            let mut failures = 0;
            for seed in 0..200 {
                let mut rng = Rng::new(seed, 9);
                let (x, heavy) = planted(&mut rng, 64, 0.1);
                let p = HhParams::new(0.1, 0.05).with_buckets(4).with_reps(reps);
                let mut hh = build_scalar(&mut rng, 64, &p).unwrap();
                for (i, &v) in x.iter().enumerate() {
                    hh.update_scalar(i, v).unwrap();
                }
                let est = hh.query_all_with(|p| p[0].abs());
                // A strict winner is required; ties count as failures.
                let top = est[heavy];
                if est.iter().enumerate().any(|(j, &e)| j != heavy && e >= top) {
                    failures += 1;
                }
            }
            assert!(failures <= last, "R = {reps}: {failures} > {last}");
            last = failures;
        }
    }

    #[test]
    fn light_items_are_capped() {
        let theta = 0.25;
        let d = 10_000;
        let trials = 50;
        let mut bad = 0;
        let mut total = 0;
        for seed in 0..trials {
            let mut rng = Rng::new(seed, 10);
            let (x, _) = planted(&mut rng, d, 0.2);
            let mass = l1_norm(&x);
            let mut hh = build_scalar(&mut rng, d, &HhParams::new(theta, 0.05)).unwrap();
            for (i, &v) in x.iter().enumerate() {
                hh.update_scalar(i, v).unwrap();
            }
            for (i, e) in hh.query_all_with(|p| p[0].abs()).into_iter().enumerate() {
                if x[i].abs() < theta * mass {
                    total += 1;
                    if e > 2.0 * theta * mass {
                        bad += 1;
                    }
                }
            }
        }
        assert!((bad as f64) <= 0.05 * total as f64, "{bad} / {total}");
    }

    #[test]
    fn concatenated_streams_add() {
        let p = HhParams::new(0.2, 0.1).with_buckets(8);
        let hashing = HhHashing::build(&mut Rng::new(11, 0), 30, &p).unwrap();
        let mut a = HeavyHitter::new(hashing.clone(), 1).unwrap();
        let mut b = a.clone();
        let mut ab = a.clone();
        let mut rng = Rng::new(12, 0);
        for k in 0..200 {
            let i = rng.below(30);
            let v = (rng.below(7) as f64) - 3.0;
            if k < 100 { a.update_scalar(i, v).unwrap() } else { b.update_scalar(i, v).unwrap() }
            ab.update_scalar(i, v).unwrap();
        }
        a.add_assign(&b).unwrap();
        assert_eq!(a.accumulators(), ab.accumulators());
    }
}
