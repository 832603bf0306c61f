//! Empirical distortion `||S A x||_1 / ||A x||_1` over sampled or enumerated directions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{l1_norm, median, DenseMatrix, Rng};
use crate::LinearSketch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    Gaussian,
    /// Gaussian values on one or two random coordinates.
    Sparse,
    /// The `d` coordinate vectors; the direction count is ignored.
    Coordinate,
    /// Grid `z / k` with integer `z`, `||z||_1 = k`, for `d <= 3`; `k` is the direction count.
    NetTiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub direction_count: usize,
    pub trial_count: usize,
    /// Directions with `A x = 0`.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
}

impl DistortionReport {
    pub fn from_ratios(ratios: Vec<f64>, trial_count: usize, skipped: usize, keep: bool) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median_ratio: median(&ratios),
            direction_count: ratios.len(),
            trial_count,
            skipped,
            ratios: keep.then_some(ratios),
        })
    }

    /// Pools reports from independent trials; ratios must have been kept.
    pub fn pool(reports: &[DistortionReport], keep: bool) -> Result<Self> {
        let mut all = Vec::new();
        let mut skipped = 0;
        for r in reports {
            all.extend(
                r.ratios
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("pooling needs per-direction ratios".into()))?,
            );
            skipped += r.skipped;
        }
        Self::from_ratios(all, reports.iter().map(|r| r.trial_count).sum(), skipped, keep)
    }
}

/// Integer points of the scaled l1 sphere `{z : ||z||_1 = k}` in `d <= 3` dimensions.
fn l1_grid(d: usize, k: usize) -> Vec<Vec<f64>> {
    fn rec(d: usize, left: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if d == 1 {
            for v in if left == 0 { vec![0] } else { vec![left, -left] } {
                prefix.push(v);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for a in -left..=left {
            prefix.push(a);
            rec(d - 1, left - a.abs(), prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, k as i64, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|z| z.into_iter().map(|v| v as f64 / k as f64).collect())
        .collect()
}

pub fn directions(rng: &mut Rng, d: usize, count: usize, mode: DirectionMode) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    Ok(match mode {
        DirectionMode::Gaussian => (0..count).map(|_| (0..d).map(|_| rng.normal()).collect()).collect(),
        DirectionMode::Sparse => (0..count)
            .map(|_| {
                let mut x = vec![0.0; d];
                for _ in 0..1 + rng.below(2.min(d)) {
                    x[rng.below(d)] = rng.normal();
                }
                x
            })
            .collect(),
        DirectionMode::Coordinate => (0..d)
            .map(|j| {
                let mut x = vec![0.0; d];
                x[j] = 1.0;
                x
            })
            .collect(),
        DirectionMode::NetTiny => {
            if d > 3 {
                return Err(Error::InvalidParameter(format!("net_tiny needs d <= 3, got {d}")));
            }
            l1_grid(d, count.max(1))
        }
    })
}

/// Ratios `||op(A) x||_1 / ||A x||_1`; directions with `A x = 0` are skipped and counted.
pub fn empirical_distortion(
    op: &dyn LinearSketch,
    a: &DenseMatrix,
    count: usize,
    mode: DirectionMode,
    rng: &mut Rng,
) -> Result<DistortionReport> {
    check_dim(op.input_dim(), a.rows())?;
    let sa = op.apply_matrix(a)?;
    distortion_of(&sa, a, &directions(rng, a.cols(), count, mode)?, true)
}

/// Ratios for a precomputed product `sa = S A`.
pub fn distortion_of(sa: &DenseMatrix, a: &DenseMatrix, dirs: &[Vec<f64>], keep: bool) -> Result<DistortionReport> {
    check_dim(a.cols(), sa.cols())?;
    let mut ratios = Vec::with_capacity(dirs.len());
    let mut skipped = 0;
    for x in dirs {
        let den = l1_norm(&a.mul_vec(x)?);
        if den == 0.0 {
            skipped += 1;
            continue;
        }
        ratios.push(l1_norm(&sa.mul_vec(x)?) / den);
    }
    DistortionReport::from_ratios(ratios, 1, skipped, keep)
}
