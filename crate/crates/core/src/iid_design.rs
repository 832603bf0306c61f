//! l1 embeddings specialised to designs with i.i.d. symmetric power-law entries.
//!
//! [`plan_embedding`] picks the operator from the tail index `p` and the
//! shape `(n, d, r)`:
//!
//! | tail index | regime | operator | scale |
//! |---|---|---|---|
//! | `p < 1` | | CountSketch, `r = c d^2 log^2 d` | 1 |
//! | `p = 1` | `c (d log d)^2 <= r <= sqrt(n) / 4` | CountSketch | 1 |
//! | `1 < p < 2` | `n^{1-1/p} >= d^{1/p} log d` | uniform rows | `kappa_n d^{1-1/p} n / r` |
//! | `1 < p < 2` | otherwise | CountSketch | 1 |
//! | `p >= 2` | | uniform rows | `n / r` |
//!
//! Logarithms are base 2.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::countsketch::CountSketchOp;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{sample_power_law, DenseMatrix, PowerLawSpec, Rng};
use crate::oracle::distortion::{directions, distortion_of, DirectionMode, DistortionReport};
use crate::oracle::stats::ols_slope;
use crate::LinearSketch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IidMethod {
    CountsketchPLt1,
    CountsketchPEq1,
    SampleScaleP12,
    CountsketchP12,
    UniformSamplePGe2,
}

impl IidMethod {
    pub fn is_countsketch(self) -> bool {
        matches!(self, Self::CountsketchPLt1 | Self::CountsketchPEq1 | Self::CountsketchP12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidConstants {
    /// Leading constant of the row-count formulas.
    pub c_rows: f64,
    /// Leading constant of `kappa_n`.
    pub c_kappa: f64,
    /// Accuracy used by the `p >= 2` row formula.
    pub eps: f64,
    /// Skip the `r` range check of the `p = 1` regime.
    pub force: bool,
}

impl Default for IidConstants {
    fn default() -> Self {
        Self {
            c_rows: 1.0,
            c_kappa: 1.0,
            eps: 0.3,
            force: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidEmbeddingPlan {
    pub p: f64,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub method: IidMethod,
    pub scale: f64,
    pub kappa_n: Option<f64>,
}

fn log2d(d: usize) -> f64 {
    (d as f64).log2().max(1.0)
}

/// `c d^2 log^2 d`.
pub fn rows_p_lt_1(d: usize, c: f64) -> usize {
    (c * (d * d) as f64 * log2d(d).powi(2)).ceil().max(1.0) as usize
}

/// `c (d log d)^2`, the lower end of the `p = 1` range.
pub fn rows_p_eq_1(d: usize, c: f64) -> usize {
    (c * (d as f64 * log2d(d)).powi(2)).ceil().max(1.0) as usize
}

/// `c max(eps^{-p}, (d^{3/2 + 1/p} eps^{-1} log(1/eps))^{p / (p - 1)})`.
pub fn rows_p_ge_2(p: f64, d: usize, eps: f64, c: f64) -> f64 {
    let a = eps.powf(-p);
    let b = ((d as f64).powf(1.5 + 1.0 / p) / eps * (1.0 / eps).log2()).powf(p / (p - 1.0));
    (c * a.max(b)).ceil()
}

/// `kappa_n = c (1 + d^{1/p} log d / n^{1 - 1/p})`.
pub fn kappa_n(p: f64, n: usize, d: usize, c: f64) -> f64 {
    c * (1.0 + (d as f64).powf(1.0 / p) * log2d(d) / (n as f64).powf(1.0 - 1.0 / p))
}

/// Whether `1 < p < 2` uses row sampling; ties go to sampling.
pub fn sampling_regime(p: f64, n: usize, d: usize) -> bool {
    (n as f64).powf(1.0 - 1.0 / p) >= (d as f64).powf(1.0 / p) * log2d(d)
}

pub fn plan_embedding(p: f64, n: usize, d: usize, r: Option<usize>, k: &IidConstants) -> Result<IidEmbeddingPlan> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("tail index must be positive, got {p}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    let (method, default_r) = if p < 1.0 {
        (IidMethod::CountsketchPLt1, rows_p_lt_1(d, k.c_rows))
    } else if p == 1.0 {
        (IidMethod::CountsketchPEq1, rows_p_eq_1(d, k.c_rows))
    } else if p < 2.0 {
        let m = if sampling_regime(p, n, d) {
            IidMethod::SampleScaleP12
        } else {
            IidMethod::CountsketchP12
        };
        (m, rows_p_lt_1(d, k.c_rows))
    } else {
        let f = rows_p_ge_2(p, d, k.eps, k.c_rows);
        (IidMethod::UniformSamplePGe2, f.min(usize::MAX as f64) as usize)
    };
    let r = r.unwrap_or(default_r);
    if r == 0 || r > n {
        return Err(Error::Constraint(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    match method {
        IidMethod::CountsketchPLt1 if r < default_r => {
            return Err(Error::Constraint(format!("r = {r} < c d^2 log^2 d = {default_r}")));
        }
        IidMethod::CountsketchPEq1 if !k.force => {
            if r < default_r {
                return Err(Error::Constraint(format!("r = {r} < c (d log d)^2 = {default_r}")));
            }
            let cap = (n as f64).sqrt() / 4.0;
            if r as f64 > cap {
                return Err(Error::Constraint(format!("r = {r} > sqrt(n) / 4 = {cap}")));
            }
        }
        _ => {}
    }
    let (scale, kn) = match method {
        IidMethod::SampleScaleP12 => {
            let kn = kappa_n(p, n, d, k.c_kappa);
            (kn * (d as f64).powf(1.0 - 1.0 / p) * n as f64 / r as f64, Some(kn))
        }
        IidMethod::UniformSamplePGe2 => (n as f64 / r as f64, None),
        _ => (1.0, None),
    };
    Ok(IidEmbeddingPlan {
        p,
        n,
        d,
        r,
        method,
        scale,
        kappa_n: kn,
    })
}

/// Uniform selection of `rows.len()` distinct rows, scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSampler {
    n: usize,
    rows: Vec<usize>,
    scale: f64,
}

impl RowSampler {
    pub fn build(rng: &mut Rng, n: usize, r: usize, scale: f64) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::InvalidParameter(format!("cannot sample {r} of {n} rows")));
        }
        Ok(Self {
            n,
            rows: sample(rng, n, r).into_vec(),
            scale,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

impl LinearSketch for RowSampler {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        Ok(self.rows.iter().map(|&i| self.scale * v[i]).collect())
    }

    fn apply_matrix(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.n, a.rows())?;
        let mut out = DenseMatrix::zeros(self.rows.len(), a.cols());
        for (k, &i) in self.rows.iter().enumerate() {
            for (o, x) in out.row_mut(k).iter_mut().zip(a.row(i)) {
                *o = self.scale * x;
            }
        }
        Ok(out)
    }
}

impl IidEmbeddingPlan {
    pub fn build(&self, rng: &mut Rng) -> Result<Box<dyn LinearSketch>> {
        Ok(if self.method.is_countsketch() {
            Box::new(CountSketchOp::build(rng, self.r, self.n)?)
        } else {
            Box::new(RowSampler::build(rng, self.n, self.r, self.scale)?)
        })
    }
}

pub fn apply_plan(plan: &IidEmbeddingPlan, rng: &mut Rng, a: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim(plan.n, a.rows())?;
    check_dim(plan.d, a.cols())?;
    plan.build(rng)?.apply_matrix(a)
}

/// `n x d` design with i.i.d. symmetric Pareto entries of index `p`.
pub fn power_law_design(rng: &mut Rng, p: f64, n: usize, d: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_row_major(n, d, sample_power_law(rng, &PowerLawSpec::pareto(p), n * d)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidDistortion {
    pub plan: IidEmbeddingPlan,
    /// Pooled over trials and direction modes.
    pub report: DistortionReport,
    pub trial_medians: Vec<f64>,
}

/// Draws `trials` designs, applies the plan to each and records ratios over
/// Gaussian, sparse and coordinate directions (`per_mode` of each sampled kind).
pub fn empirical_distortion_iid(
    rng: &mut Rng,
    plan: &IidEmbeddingPlan,
    trials: usize,
    per_mode: usize,
) -> Result<IidDistortion> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut reports = Vec::with_capacity(trials);
    let mut trial_medians = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut tr = rng.derive(t as u64);
        let a = power_law_design(&mut tr, plan.p, plan.n, plan.d)?;
        let sa = apply_plan(plan, &mut tr, &a)?;
        let mut dirs = directions(&mut tr, plan.d, per_mode, DirectionMode::Gaussian)?;
        dirs.extend(directions(&mut tr, plan.d, per_mode, DirectionMode::Sparse)?);
        dirs.extend(directions(&mut tr, plan.d, 0, DirectionMode::Coordinate)?);
        let rep = distortion_of(&sa, &a, &dirs, true)?;
        trial_medians.push(rep.median_ratio);
        reports.push(rep);
    }
    Ok(IidDistortion {
        plan: plan.clone(),
        report: DistortionReport::pool(&reports, true)?,
        trial_medians,
    })
}

/// `E |X|^k 1{|X| <= t}` over the samples.
pub fn truncated_moment(samples: &[f64], k: i32, t: f64) -> f64 {
    let s: f64 = samples.iter().map(|x| x.abs()).filter(|&x| x <= t).map(|x| x.powi(k)).sum();
    s / samples.len() as f64
}

/// Growth exponent of the truncated `k`-th moment in `t` for index `p < k`.
pub fn truncated_moment_exponent(p: f64, k: i32) -> Option<f64> {
    (p < k as f64).then(|| k as f64 - p)
}

/// Log-log slope of the truncated `k`-th moment over the thresholds `ts`.
pub fn truncated_moment_slope(rng: &mut Rng, p: f64, k: i32, ts: &[f64], samples: usize) -> Result<f64> {
    let x = sample_power_law(rng, &PowerLawSpec::pareto(p), samples)?;
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ts.iter().map(|&t| truncated_moment(&x, k, t).ln()).collect();
    Ok(ols_slope(&lx, &ly))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l1_norm;

    #[test]
    fn p_half_uses_countsketch_with_formula_rows() {
        let plan = plan_embedding(0.5, 100_000, 8, None, &IidConstants::default()).unwrap();
        assert_eq!(plan.method, IidMethod::CountsketchPLt1);
        assert_eq!(plan.r, 8 * 8 * 3 * 3);
        assert_eq!(plan.scale, 1.0);
    }

    #[test]
    fn p_three_scales_by_n_over_r() {
        let plan = plan_embedding(3.0, 1_000_000, 4, Some(10_000), &IidConstants::default()).unwrap();
        assert_eq!(plan.method, IidMethod::UniformSamplePGe2);
        assert_eq!(plan.scale, 100.0);
    }

    #[test]
    fn p_one_and_a_half_regime() {
        let (n, d) = (100_000_000usize, 4usize);
        let lhs = (n as f64).powf(1.0 / 3.0);
        let rhs = 4f64.powf(2.0 / 3.0) * 2.0;
        assert!(lhs > rhs);
        let plan = plan_embedding(1.5, n, d, Some(1000), &IidConstants::default()).unwrap();
        assert_eq!(plan.method, IidMethod::SampleScaleP12);
        let kn = 1.0 + rhs / lhs;
        let expect = kn * 4f64.powf(1.0 / 3.0) * n as f64 / 1000.0;
        assert!((plan.scale / expect - 1.0).abs() < 1e-12);
        let small = plan_embedding(1.5, 50, 16, Some(10), &IidConstants::default()).unwrap();
        assert_eq!(small.method, IidMethod::CountsketchP12);
    }

    #[test]
    fn p_one_range_is_enforced() {
        let k = IidConstants::default();
        match plan_embedding(1.0, 100_000, 4, Some(1024), &k) {
            Err(Error::Constraint(msg)) => assert!(msg.contains("sqrt(n)"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(plan_embedding(1.0, 100_000, 4, Some(10), &k).is_err());
        assert!(plan_embedding(1.0, 1_000_000, 4, Some(100), &k).is_ok());
        let forced = IidConstants { force: true, ..k };
        assert!(plan_embedding(1.0, 100_000, 4, Some(1024), &forced).is_ok());
        assert!(plan_embedding(0.5, 100, 8, Some(10), &k).is_err());
        assert!(plan_embedding(3.0, 100, 2, Some(101), &k).is_err());
    }

    #[test]
    fn full_uniform_sample_reorders_rows() {
        let mut rng = Rng::new(1, 0);
        let a = power_law_design(&mut rng, 3.0, 50, 3).unwrap();
        let plan = plan_embedding(3.0, 50, 3, Some(50), &IidConstants::default()).unwrap();
        let sa = apply_plan(&plan, &mut rng, &a).unwrap();
        let mut x: Vec<Vec<f64>> = (0..50).map(|i| a.row(i).to_vec()).collect();
        let mut y: Vec<Vec<f64>> = (0..50).map(|i| sa.row(i).to_vec()).collect();
        x.sort_by(|p, q| p[0].total_cmp(&q[0]));
        y.sort_by(|p, q| p[0].total_cmp(&q[0]));
        assert_eq!(x, y);
    }

    #[test]
    fn countsketch_plans_never_expand_and_zero_maps_to_zero() {
        let mut rng = Rng::new(2, 0);
        let plan = plan_embedding(0.5, 5000, 4, None, &IidConstants::default()).unwrap();
        let a = power_law_design(&mut rng, 0.5, 5000, 4).unwrap();
        let sa = apply_plan(&plan, &mut rng, &a).unwrap();
        for j in 0..4 {
            assert!(l1_norm(&sa.column(j)) <= l1_norm(&a.column(j)) * (1.0 + 1e-12));
        }
        let z = apply_plan(&plan, &mut rng, &DenseMatrix::zeros(5000, 4)).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == 0.0));
        assert!(apply_plan(&plan, &mut rng, &DenseMatrix::zeros(10, 4)).is_err());
    }

    #[test]
    fn countsketch_ratios_bounded_by_one() {
        let plan = plan_embedding(0.5, 20_000, 4, None, &IidConstants::default()).unwrap();
        let res = empirical_distortion_iid(&mut Rng::new(3, 0), &plan, 5, 20).unwrap();
        assert!(res.report.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn p_ge_2_formula_median_near_one() {
        let plan = plan_embedding(3.0, 100_000, 3, None, &IidConstants::default()).unwrap();
        let res = empirical_distortion_iid(&mut Rng::new(4, 0), &plan, 51, 20).unwrap();
        assert!((0.7..=1.3).contains(&res.report.median_ratio), "{}", res.report.median_ratio);
    }

    #[test]
    fn p_half_median_bounded_below() {
        let plan = plan_embedding(0.5, 100_000, 4, None, &IidConstants::default()).unwrap();
        let res = empirical_distortion_iid(&mut Rng::new(5, 0), &plan, 11, 20).unwrap();
        assert!((0.2..=1.0).contains(&res.report.median_ratio), "{}", res.report.median_ratio);
    }

    #[test]
    fn truncated_first_moment_slope() {
        let ts: Vec<f64> = (10..=20).step_by(2).map(|e| 2f64.powi(e)).collect();
        let s = truncated_moment_slope(&mut Rng::new(6, 0), 0.5, 1, &ts, 1_000_000).unwrap();
        assert!((s - truncated_moment_exponent(0.5, 1).unwrap()).abs() <= 0.1, "{s}");
        assert_eq!(truncated_moment_exponent(1.5, 1), None);
    }
}
