//! Entrywise l1 embedding with a dimension/distortion trade-off.
//!
//! Same stacked structure as the subspace M-sketch, but with deterministic
//! rates `p_h = B^-h` and `B = (d/delta * ln n)^alpha`.

use serde::{Deserialize, Serialize};

use crate::countsketch::CountSketchOp;
use crate::error::{Error, Result};
use crate::numerics::{l1_norm_matrix, sample_cauchy, DenseMatrix, Rng};
use crate::subspace::{ceil_tol, MSketchConfig, MSketchOp, ScaleMode};
use crate::LinearSketch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntrywiseConfig {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    pub branching: f64,
    pub h_max: usize,
    pub q_max: f64,
    pub n0: usize,
    pub n_level: usize,
    /// Constants standing in for the polylog factors in `N0` and `N`.
    pub const_n0: f64,
    pub const_n: f64,
    pub scale_mode: ScaleMode,
}

/// `ceil(log_B n)`, at least 1.
fn levels_for(n: usize, branching: f64) -> usize {
    (ceil_tol((n as f64).ln() / branching.ln()) as usize).max(1)
}

impl EntrywiseConfig {
    /// Constants from their closed forms, with unit polylog constants.
    pub fn paper(n: usize, d: usize, alpha: f64, delta: f64) -> Result<Self> {
        Self::paper_with_constants(n, d, alpha, delta, 1.0, 1.0)
    }

    pub fn paper_with_constants(
        n: usize,
        d: usize,
        alpha: f64,
        delta: f64,
        const_n0: f64,
        const_n: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        if n < 2 || d == 0 {
            return Err(Error::InvalidParameter("need n >= 2 and d >= 1".into()));
        }
        let (nf, df) = (n as f64, d as f64);
        let branching = (df / delta * nf.ln()).powf(alpha);
        if branching <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "branching factor {branching} <= 1; increase d/delta or n"
            )));
        }
        let h_max = levels_for(n, branching);
        let q_max = (nf * df * h_max as f64 / delta).log2();
        let n0 = ceil_tol(const_n0 * branching / delta * nf.ln().ln().max(1.0)).max(1.0);
        let n_level = ceil_tol(const_n * branching * nf.ln()).max(1.0);
        Ok(Self {
            n,
            d,
            alpha,
            delta,
            branching,
            h_max,
            q_max,
            n0: n0 as usize,
            n_level: n_level as usize,
            const_n0,
            const_n,
            scale_mode: ScaleMode::Paper,
        })
    }

    /// User-chosen `B`, `N0`, `N`; `h_max` still follows `ceil(log_B n)`.
    pub fn calibrated(n: usize, d: usize, branching: f64, n0: usize, n_level: usize) -> Result<Self> {
        if !(branching > 1.0) || !branching.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "branching factor must exceed 1, got {branching}"
            )));
        }
        if n == 0 || d == 0 || n0 == 0 || n_level == 0 {
            return Err(Error::InvalidParameter("dimensions and bucket counts must be positive".into()));
        }
        let h_max = levels_for(n, branching);
        Ok(Self {
            n,
            d,
            alpha: f64::NAN,
            delta: f64::NAN,
            branching,
            h_max,
            q_max: f64::NAN,
            n0,
            n_level,
            const_n0: f64::NAN,
            const_n: f64::NAN,
            scale_mode: ScaleMode::Calibrated,
        })
    }

    /// Output dimension `N0 + h_max * N`.
    pub fn output_dim(&self) -> usize {
        self.n0 + self.h_max * self.n_level
    }

    fn msketch_config(&self) -> Result<MSketchConfig> {
        MSketchConfig::calibrated(self.n, self.d, self.branching, self.n0, self.n_level, self.h_max)
    }
}

/// Builds the sketch with rates `B^-h`, i.e. the M-sketch with shift fixed at 1.
pub fn build_entrywise(rng: &mut Rng, config: &EntrywiseConfig) -> Result<MSketchOp> {
    MSketchOp::build_with_shift(rng, &config.msketch_config()?, 1.0)
}

/// `||S A||_1` taken entrywise.
pub fn estimate_entrywise_norm(op: &MSketchOp, a: &DenseMatrix) -> Result<f64> {
    Ok(l1_norm_matrix(&op.apply_matrix(a)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardDistribution {
    /// `d x d` i.i.d. Cauchy.
    Mu1,
    /// First `r` columns i.i.d. Cauchy scaled by `d/r`, the rest zero.
    Mu2,
}

pub fn gen_entrywise_hard_instance(
    rng: &mut Rng,
    d: usize,
    r: usize,
    which: HardDistribution,
) -> Result<DenseMatrix> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    Ok(match which {
        HardDistribution::Mu1 => DenseMatrix::from_row_major(d, d, sample_cauchy(rng, d * d))?,
        HardDistribution::Mu2 => {
            let scale = d as f64 / r as f64;
            let mut a = DenseMatrix::zeros(d, d);
            for i in 0..d {
                let row = sample_cauchy(rng, r);
                for (j, x) in row.into_iter().enumerate() {
                    a.set(i, j, scale * x);
                }
            }
            a
        }
    })
}

/// Ratios `||S A||_1 / ||A||_1` for an `r x d` CountSketch `S` over `draws`
/// independent pairs of sketch and instance.
pub fn hard_instance_ratios(
    seed: u64,
    d: usize,
    r: usize,
    which: HardDistribution,
    draws: usize,
) -> Result<Vec<f64>> {
    let stream = match which {
        HardDistribution::Mu1 => 1,
        HardDistribution::Mu2 => 2,
    };
    let base = Rng::new(seed, stream);
    (0..draws as u64)
        .map(|k| {
            let mut rng = base.derive(k);
            let a = gen_entrywise_hard_instance(&mut rng, d, r, which)?;
            let s = CountSketchOp::build(&mut rng, r, d)?;
            Ok(l1_norm_matrix(&s.apply_matrix(&a)?) / l1_norm_matrix(&a))
        })
        .collect()
}
