//! Randomness, samplers, dense matrices and exact norms shared by every sketch.

mod matrix;
mod rng;
mod sampling;

pub use matrix::DenseMatrix;
pub use rng::{splitmix64, unit_open, Rng};
pub use sampling::{
    cauchy_abs_tail, cauchy_cdf, cauchy_from_uniform, sample_cauchy, sample_gaussian,
    sample_power_law, symmetric_stable, PowerLawKind, PowerLawSpec, CAUCHY_ABS_MEDIAN,
};

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact `sum |v_i|`.
pub fn l1_norm(v: &[f64]) -> f64 {
    compensated_sum(v.iter().map(|x| x.abs()))
}

/// Entrywise `sum |A_ij|`.
pub fn l1_norm_matrix(a: &DenseMatrix) -> f64 {
    l1_norm(a.as_slice())
}

/// Median of a slice (upper median for even lengths). Panics on empty input.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

pub fn median_in_place(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty(), "median of empty slice");
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}
