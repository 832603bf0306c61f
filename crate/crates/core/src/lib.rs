//! Oblivious l1 sketches.
//!
//! The crate provides CountSketch, the random-boundary M-sketch subspace and
//! entrywise embeddings, a streaming (1 +- eps) l1-norm estimator built from
//! subsampled heavy-hitter structures, a tensor-product sketch for streaming
//! independence testing, embeddings specialised to i.i.d. power-law designs,
//! and brute-force oracles used to check all of them.

pub mod countsketch;
pub mod entrywise;
pub mod error;
pub mod heavy_hitter;
pub mod iid_design;
pub mod l1_estimator;
pub mod numerics;
pub mod oracle;
pub mod stream;
pub mod subspace;
pub mod suite;
pub mod tensor;

pub use error::{Error, Result};

use numerics::DenseMatrix;

/// A linear map from `input_dim` to `output_dim` coordinates.
pub trait LinearSketch {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;

    /// Applies the map to every column of `a`.
    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        error::check_dim(self.input_dim(), a.rows())?;
        let mut out = DenseMatrix::zeros(self.output_dim(), a.cols());
        for j in 0..a.cols() {
            let col = self.apply(&a.column(j))?;
            for (i, x) in col.into_iter().enumerate() {
                out.set(i, j, x);
            }
        }
        Ok(out)
    }
}

/// The identity map on `n` coordinates.
#[derive(Clone, Copy, Debug)]
pub struct IdentitySketch(pub usize);

impl LinearSketch for IdentitySketch {
    fn input_dim(&self) -> usize {
        self.0
    }
    fn output_dim(&self) -> usize {
        self.0
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        error::check_dim(self.0, v.len())?;
        Ok(v.to_vec())
    }
}

/// The map sending everything to zero in `k` coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ZeroSketch {
    pub n: usize,
    pub k: usize,
}

impl LinearSketch for ZeroSketch {
    fn input_dim(&self) -> usize {
        self.n
    }
    fn output_dim(&self) -> usize {
        self.k
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        error::check_dim(self.n, v.len())?;
        Ok(vec![0.0; self.k])
    }
}
