//! Adversarial design matrices for the i.i.d. lower bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cauchy_from_uniform, symmetric_stable, DenseMatrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardIidKind {
    CauchyDesign,
    PstableDesign(f64),
}

/// `n x d` matrix with i.i.d. entries of the given law; `r` is the target
/// sketch size and is only validated.
pub fn gen_hard_iid_instance(rng: &mut Rng, kind: HardIidKind, n: usize, d: usize, r: usize) -> Result<DenseMatrix> {
    if n == 0 || d == 0 || r == 0 || r > n {
        return Err(Error::InvalidParameter(format!("need 0 < r <= n and d > 0, got n={n}, d={d}, r={r}")));
    }
    match kind {
        HardIidKind::CauchyDesign => Ok(DenseMatrix::from_fn(n, d, |_, _| cauchy_from_uniform(rng.uniform_open()))),
        HardIidKind::PstableDesign(p) => {
            if !(p > 0.0 && p <= 2.0) {
                return Err(Error::InvalidParameter(format!("stable index must lie in (0, 2], got {p}")));
            }
            Ok(DenseMatrix::from_fn(n, d, |_, _| symmetric_stable(rng, p)))
        }
    }
}
