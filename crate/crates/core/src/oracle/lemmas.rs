//! Monte Carlo checks of the probabilistic lemmas behind the sketches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l1_norm, Rng};
use crate::oracle::stats::binomial_upper;

/// Frequency of `p t in [a, b]` for `p = B'^{-u}`, `u ~ U[0, 1]`, `B' = (b / a)^{1 / delta'}`.
pub fn mc_boundary_lemma(rng: &mut Rng, a: f64, b: f64, delta_prime: f64, t: f64, trials: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 && b > 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < a < 1 < b, got a={a}, b={b}")));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) || trials == 0 {
        return Err(Error::InvalidParameter("need delta' in (0, 1) and trials > 0".into()));
    }
    let big = (b / a).powf(1.0 / delta_prime);
    let hits = (0..trials)
        .filter(|_| {
            let pt = big.powf(-rng.uniform()) * t;
            (a..=b).contains(&pt)
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RademacherVectors {
    /// Normalized Gaussian vectors, fixed across trials.
    Random,
    /// Every vector equals `e_1`.
    AllE1,
    Given(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherReport {
    pub bound: f64,
    pub violations: usize,
    pub trials: usize,
    pub rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks `||sum_i eps_i x_i||_1 <= d sqrt(ln(2d / delta) / 2) sqrt(s)` for unit-l1 `x_i`.
pub fn mc_rademacher_l1(
    rng: &mut Rng,
    s: usize,
    d: usize,
    delta: f64,
    trials: usize,
    vectors: RademacherVectors,
) -> Result<RademacherReport> {
    if s == 0 || d == 0 || trials == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter("need s, d, trials > 0 and delta in (0, 1)".into()));
    }
    let xs: Vec<Vec<f64>> = match vectors {
        RademacherVectors::Random => (0..s)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let n = l1_norm(&v);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect(),
        RademacherVectors::AllE1 => (0..s)
            .map(|_| {
                let mut v = vec![0.0; d];
                v[0] = 1.0;
                v
            })
            .collect(),
        RademacherVectors::Given(v) => {
            if v.len() != s || v.iter().any(|x| x.len() != d) {
                return Err(Error::InvalidParameter("given vectors must be s vectors of length d".into()));
            }
            v
        }
    };
    let bound = d as f64 * (0.5 * (2.0 * d as f64 / delta).ln()).sqrt() * (s as f64).sqrt();
    let mut violations = 0;
    let mut sum = vec![0.0; d];
    for _ in 0..trials {
        sum.iter_mut().for_each(|v| *v = 0.0);
        for x in &xs {
            let e = rng.sign();
            sum.iter_mut().zip(x).for_each(|(acc, v)| *acc += e * v);
        }
        if l1_norm(&sum) > bound {
            violations += 1;
        }
    }
    let rate = violations as f64 / trials as f64;
    let threshold = binomial_upper(delta, trials);
    Ok(RademacherReport {
        bound,
        violations,
        trials,
        rate,
        threshold,
        pass: rate <= threshold,
    })
}
