//! CountSketch: each input coordinate is hashed to one bucket with a random sign.
//!
//! The hash and sign tables are materialized from the generator rather than
//! drawn from a k-wise independent family, so an operator is fully random and
//! can be replayed exactly from `(r, n, seed)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{DenseMatrix, Rng};
use crate::LinearSketch;

/// Stream id used when an operator is rebuilt from its serialized descriptor.
pub const COUNTSKETCH_STREAM: u64 = 0xC5;

#[derive(Clone, Debug, PartialEq)]
pub struct CountSketchOp {
    r: usize,
    n: usize,
    bucket_of: Vec<u32>,
    sign_of: Vec<f64>,
}

/// `(r, n, seed)` is enough to rebuild the tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSketchDescriptor {
    pub r: usize,
    pub n: usize,
    pub seed: u64,
}

impl CountSketchOp {
    pub fn build(rng: &mut Rng, r: usize, n: usize) -> Result<Self> {
        if r == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "CountSketch needs r >= 1 and n >= 1, got r={r}, n={n}"
            )));
        }
        if r > u32::MAX as usize {
            return Err(Error::TooLarge(format!("{r} buckets")));
        }
        let bucket_of = (0..n).map(|_| rng.below(r) as u32).collect();
        let sign_of = (0..n).map(|_| rng.sign()).collect();
        Ok(Self {
            r,
            n,
            bucket_of,
            sign_of,
        })
    }

    pub fn from_descriptor(desc: &CountSketchDescriptor) -> Result<Self> {
        Self::build(&mut Rng::new(desc.seed, COUNTSKETCH_STREAM), desc.r, desc.n)
    }

    /// Builds an operator from explicit tables. Signs must be +-1.
    pub fn from_tables(r: usize, bucket_of: Vec<u32>, sign_of: Vec<f64>) -> Result<Self> {
        check_dim(bucket_of.len(), sign_of.len())?;
        if r == 0 || bucket_of.is_empty() {
            return Err(Error::InvalidParameter("empty CountSketch tables".into()));
        }
        if let Some(&b) = bucket_of.iter().find(|&&b| b as usize >= r) {
            return Err(Error::IndexOutOfRange {
                index: b as usize,
                dim: r,
            });
        }
        if sign_of.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidParameter("signs must be +-1".into()));
        }
        Ok(Self {
            r,
            n: bucket_of.len(),
            bucket_of,
            sign_of,
        })
    }

    #[inline]
    pub fn buckets(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn bucket_of(&self, i: usize) -> usize {
        self.bucket_of[i] as usize
    }

    #[inline]
    pub fn sign_of(&self, i: usize) -> f64 {
        self.sign_of[i]
    }

    pub fn bucket_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.r];
        for &b in &self.bucket_of {
            loads[b as usize] += 1;
        }
        loads
    }

    /// Applies the operator to the rows of `a`, returning the product and the
    /// number of floating-point operations spent (one multiply and one add per nonzero).
    pub fn apply_matrix_counted(&self, a: &DenseMatrix) -> Result<(DenseMatrix, usize)> {
        check_dim(self.n, a.rows())?;
        let mut out = DenseMatrix::zeros(self.r, a.cols());
        let mut flops = 0;
        for i in 0..self.n {
            let s = self.sign_of[i];
            let b = self.bucket_of[i] as usize;
            let src = a.row(i);
            let dst = out.row_mut(b);
            for (d, &x) in dst.iter_mut().zip(src) {
                if x != 0.0 {
                    *d += s * x;
                    flops += 2;
                }
            }
        }
        Ok((out, flops))
    }
}

impl LinearSketch for CountSketchOp {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.r
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        let mut out = vec![0.0; self.r];
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                out[self.bucket_of[i] as usize] += self.sign_of[i] * x;
            }
        }
        Ok(out)
    }

    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_matrix_counted(a).map(|(m, _)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l1_norm;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    #[test]
    fn rejects_empty_shapes() {
        let mut rng = Rng::new(1, 0);
        assert!(CountSketchOp::build(&mut rng, 0, 5).is_err());
        assert!(CountSketchOp::build(&mut rng, 5, 0).is_err());
    }

    #[test]
    fn single_bucket_collects_everything() {
        let op = CountSketchOp::build(&mut Rng::new(2, 0), 1, 50).unwrap();
        assert!((0..50).all(|i| op.bucket_of(i) == 0));
    }

    #[test]
    fn rebuild_is_identical() {
        let d = CountSketchDescriptor {
            r: 17,
            n: 300,
            seed: 99,
        };
        assert_eq!(
            CountSketchOp::from_descriptor(&d).unwrap(),
            CountSketchOp::from_descriptor(&d).unwrap()
        );
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<CountSketchDescriptor>(&json).unwrap(), d);
    }

    #[test]
    fn max_load_balls_in_bins() {
        // With r = n the expected maximum load is about ln n / ln ln n, so the
        // bound used here is three times that.
        let n = 10_000usize;
        let ln = (n as f64).ln();
        let bound = (3.0 * ln / ln.ln()).floor() as usize;
        for seed in 0..100 {
            let op = CountSketchOp::build(&mut Rng::new(seed, 0), n, n).unwrap();
            let max = *op.bucket_loads().iter().max().unwrap();
            assert!(max <= bound, "seed {seed}: max load {max} > {bound}");
        }
        // With r much smaller than n the loads concentrate around n / r.
        let r = 100;
        for seed in 0..100 {
            let op = CountSketchOp::build(&mut Rng::new(seed, 0), r, n).unwrap();
            let max = *op.bucket_loads().iter().max().unwrap();
            assert!(max <= 3 * n / r, "seed {seed}: max load {max}");
        }
    }

    #[test]
    fn unit_vector_and_zero() {
        let op = CountSketchOp::build(&mut Rng::new(3, 0), 8, 20).unwrap();
        let mut e = vec![0.0; 20];
        e[7] = 1.0;
        assert_eq!(l1_norm(&op.apply(&e).unwrap()), 1.0);
        assert!(op.apply(&[0.0; 20]).unwrap().iter().all(|x| *x == 0.0));
        assert!(op.apply(&[0.0; 19]).is_err());
    }

    #[test]
    fn injective_identity_is_signed_permutation() {
        let n = 6;
        let op = CountSketchOp::from_tables(
            n,
            vec![3, 0, 5, 1, 4, 2],
            vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0],
        )
        .unwrap();
        let out = op.apply_matrix(&DenseMatrix::identity(n)).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if op.bucket_of(j) == i { op.sign_of(j) } else { 0.0 };
                assert_eq!(out.get(i, j), expect);
            }
        }
    }

    #[test]
    fn flops_bounded_by_twice_nnz() {
        let mut rng = Rng::new(4, 0);
        let a = DenseMatrix::from_fn(40, 3, |i, j| if (i + j) % 3 == 0 { rng.normal() } else { 0.0 });
        let op = CountSketchOp::build(&mut Rng::new(5, 0), 7, 40).unwrap();
        let (_, flops) = op.apply_matrix_counted(&a).unwrap();
        assert!(flops <= 2 * a.nnz());
    }

    #[test]
    fn no_expansion_thousand_pairs() {
        let mut rng = Rng::new(6, 0);
        for t in 0..1000 {
            let n = 1 + rng.below(200);
            let r = 1 + rng.below(64);
            let op = CountSketchOp::build(&mut rng.derive(t), r, n).unwrap();
            let v: Vec<f64> = (0..n).map(|_| rng.normal() * 10.0).collect();
            let lhs = l1_norm(&op.apply(&v).unwrap());
            let rhs = l1_norm(&v);
            assert!(lhs <= rhs + 1e-12 * rhs, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn sign_symmetry_output_means_vanish() {
        let n = 32;
        let r = 4;
        let trials = 10_000;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let mut sums = vec![0.0; r];
        let mut sq = vec![0.0; r];
        for seed in 0..trials {
            let out = CountSketchOp::build(&mut Rng::new(seed, 1), r, n)
                .unwrap()
                .apply(&v)
                .unwrap();
            for b in 0..r {
                sums[b] += out[b];
                sq[b] += out[b] * out[b];
            }
        }
        for b in 0..r {
            let mean = sums[b] / trials as f64;
            let sd = (sq[b] / trials as f64 - mean * mean).sqrt();
            assert!(mean.abs() <= 4.0 * sd / (trials as f64).sqrt(), "bucket {b}: {mean}");
        }
    }

    proptest! {
        #[test]
        fn linear(seed in any::<u64>(), alpha in -5.0f64..5.0, beta in -5.0f64..5.0) {
            let mut rng = Rng::new(seed, 0);
            let n = 50;
            let op = CountSketchOp::build(&mut rng, 9, n).unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = op.apply(&mix).unwrap();
            let (su, sv) = (op.apply(&u).unwrap(), op.apply(&v).unwrap());
            for k in 0..9 {
                let rhs = alpha * su[k] + beta * sv[k];
                prop_assert!((lhs[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn column_norms_do_not_expand(seed in any::<u64>()) {
            let mut rng = Rng::new(seed, 0);
            let a = DenseMatrix::from_fn(30, 4, |_, _| rng.normal());
            let op = CountSketchOp::build(&mut rng, 5, 30).unwrap();
            let sa = op.apply_matrix(&a).unwrap();
            for j in 0..4 {
                let lhs = l1_norm(&sa.column(j));
                let rhs = l1_norm(&a.column(j));
                prop_assert!(lhs <= rhs * (1.0 + 1e-12));
            }
        }
    }
}
