//! Samplers for the heavy-tailed laws used throughout the crate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::rng::Rng;
use crate::error::{Error, Result};

/// Standard Cauchy via `tan(pi (U - 1/2))`.
#[inline]
pub fn cauchy_from_uniform(u: f64) -> f64 {
    (PI * (u - 0.5)).tan()
}

pub fn sample_cauchy(rng: &mut Rng, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| cauchy_from_uniform(rng.uniform_open()))
        .collect()
}

pub fn sample_gaussian(rng: &mut Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.normal()).collect()
}

/// How the body of a power-law distribution is realized. Only the tail is
/// constrained; the body is a modelling choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerLawKind {
    /// Two-sided Pareto: `|X| = scale * U^{-1/p}`, so `Pr(|X| > t) = (scale/t)^p` for `t >= scale`.
    Pareto,
    /// Symmetric p-stable via Chambers–Mallows–Stuck; requires `p` in (0, 2].
    Stable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub p: f64,
    pub scale: f64,
    pub symmetric: bool,
    pub kind: PowerLawKind,
}

impl PowerLawSpec {
    /// Symmetric unit-scale Pareto of index `p`.
    pub fn pareto(p: f64) -> Self {
        Self {
            p,
            scale: 1.0,
            symmetric: true,
            kind: PowerLawKind::Pareto,
        }
    }

    pub fn stable(p: f64) -> Self {
        Self {
            p,
            scale: 1.0,
            symmetric: true,
            kind: PowerLawKind::Stable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power-law index must be positive, got {}",
                self.p
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power-law scale must be positive, got {}",
                self.scale
            )));
        }
        if self.kind == PowerLawKind::Stable && self.p > 2.0 {
            return Err(Error::InvalidParameter(format!(
                "stable index must lie in (0, 2], got {}",
                self.p
            )));
        }
        Ok(())
    }

    #[inline]
    fn draw(&self, rng: &mut Rng) -> f64 {
        let magnitude_or_value = match self.kind {
            PowerLawKind::Pareto => self.scale * rng.uniform_open().powf(-1.0 / self.p),
            PowerLawKind::Stable => self.scale * symmetric_stable(rng, self.p),
        };
        match (self.kind, self.symmetric) {
            (PowerLawKind::Pareto, true) => rng.sign() * magnitude_or_value,
            (PowerLawKind::Pareto, false) => magnitude_or_value,
            (PowerLawKind::Stable, true) => magnitude_or_value,
            (PowerLawKind::Stable, false) => magnitude_or_value.abs(),
        }
    }
}

/// Symmetric alpha-stable draw with unit scale (characteristic function `exp(-|t|^alpha)`).
pub fn symmetric_stable(rng: &mut Rng, alpha: f64) -> f64 {
    let v = PI * (rng.uniform_open() - 0.5);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let w = -rng.uniform_open().ln();
    let s = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let t = ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha);
    s * t
}

pub fn sample_power_law(rng: &mut Rng, spec: &PowerLawSpec, count: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..count).map(|_| spec.draw(rng)).collect())
}

/// CDF of the standard Cauchy law.
pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / PI
}

/// `Pr(|C| > t)` for standard Cauchy `C`.
pub fn cauchy_abs_tail(t: f64) -> f64 {
    1.0 - 2.0 * t.atan() / PI
}

/// Median of `|C|` for standard Cauchy `C`: `tan(pi/4) = 1`.
pub const CAUCHY_ABS_MEDIAN: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(|a, b| a.total_cmp(b));
        v[v.len() / 2]
    }

    #[test]
    fn empty_counts() {
        let mut rng = Rng::new(1, 0);
        assert!(sample_cauchy(&mut rng, 0).is_empty());
        assert!(sample_power_law(&mut rng, &PowerLawSpec::pareto(1.0), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cauchy_abs_median_is_one() {
        let mut rng = Rng::new(2, 0);
        let mut v: Vec<f64> = sample_cauchy(&mut rng, 1_000_000)
            .into_iter()
            .map(f64::abs)
            .collect();
        assert!((median(&mut v) - CAUCHY_ABS_MEDIAN).abs() < 0.01);
    }

    #[test]
    fn cauchy_tail_at_ten() {
        let mut rng = Rng::new(3, 0);
        let n = 1_000_000;
        let hits = sample_cauchy(&mut rng, n)
            .into_iter()
            .filter(|x| x.abs() > 10.0)
            .count();
        let frac = hits as f64 / n as f64;
        let exact = cauchy_abs_tail(10.0);
        assert!((exact - 0.0635).abs() < 5e-4);
        assert!((frac - exact).abs() < 0.003, "{frac} vs {exact}");
    }

    #[test]
    fn cauchy_ks_statistic_small() {
        let mut rng = Rng::new(4, 0);
        let mut v = sample_cauchy(&mut rng, 100_000);
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cauchy_cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    #[test]
    fn rejects_nonpositive_index() {
        let mut rng = Rng::new(5, 0);
        assert!(sample_power_law(&mut rng, &PowerLawSpec::pareto(0.0), 3).is_err());
        assert!(sample_power_law(&mut rng, &PowerLawSpec::pareto(-1.0), 3).is_err());
        assert!(sample_power_law(&mut rng, &PowerLawSpec::stable(2.5), 3).is_err());
    }

    #[test]
    fn pareto_p1_tail_times_t_is_flat() {
        let mut rng = Rng::new(6, 0);
        let n = 1_000_000;
        let v = sample_power_law(&mut rng, &PowerLawSpec::pareto(1.0), n).unwrap();
        let tail = |t: f64| v.iter().filter(|x| x.abs() > t).count() as f64 / n as f64 * t;
        let (a, b) = (tail(10.0), tail(100.0));
        assert!((a / b - 1.0).abs() < 0.10, "{a} {b}");
    }

    #[test]
    fn pareto_p2_truncated_second_moment_grows_logarithmically() {
        // E[X^2 | |X| <= T] = 2 ln T / (1 - T^-2) for the unit Pareto with p = 2.
        // Above T ~ 2^10 the estimate at 10^6 draws is dominated by a handful of samples.
        let mut rng = Rng::new(7, 0);
        let n = 1_000_000;
        let v = sample_power_law(&mut rng, &PowerLawSpec::pareto(2.0), n).unwrap();
        let xs: Vec<f64> = (4..=10).map(|k| (2f64.powi(k)).ln()).collect();
        let ys: Vec<f64> = (4..=10)
            .map(|k| {
                let t = 2f64.powi(k);
                let (s, c) = v
                    .iter()
                    .filter(|x| x.abs() <= t)
                    .fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
                s / c as f64
            })
            .collect();
        let slope = crate::oracle::stats::ols_slope(&xs, &ys);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn heavy_tail_single_max_dominates_for_p_below_one() {
        // For p < 1 the largest draw carries a constant fraction of the l1 mass.
        let mut rng = Rng::new(8, 0);
        let spec = PowerLawSpec::pareto(0.5);
        let trials = 400;
        let mut dominated = 0;
        for _ in 0..trials {
            let v = sample_power_law(&mut rng, &spec, 1000).unwrap();
            let total: f64 = v.iter().map(|x| x.abs()).sum();
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if max > 0.5 * total {
                dominated += 1;
            }
        }
        let frac = dominated as f64 / trials as f64;
        assert!(frac > 0.2, "fraction {frac}");
    }

    #[test]
    fn stable_alpha_one_is_cauchy() {
        let mut rng = Rng::new(9, 0);
        let mut v: Vec<f64> = (0..200_000)
            .map(|_| symmetric_stable(&mut rng, 1.0).abs())
            .collect();
        assert!((median(&mut v) - 1.0).abs() < 0.02);
    }
}
