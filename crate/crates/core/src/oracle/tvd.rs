//! Exact `||P - Q||_1` for a materialized count tensor.

use crate::error::{Error, Result};
use crate::tensor::StreamUpdate;

/// Largest tensor the oracle materializes.
pub const MAX_CELLS: u64 = 10_000_000;

fn cells(q: usize, d: usize) -> Result<usize> {
    (d as u64)
        .checked_pow(q as u32)
        .filter(|&c| c <= MAX_CELLS)
        .map(|c| c as usize)
        .ok_or_else(|| Error::TooLarge(format!("{d}^{q} cells exceed {MAX_CELLS}")))
}

/// Count tensor of a stream, mode 1 least significant.
pub fn count_tensor(stream: &[StreamUpdate], q: usize, d: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; cells(q, d)?];
    for u in stream {
        if u.indices.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: u.indices.len(),
            });
        }
        let mut key = 0usize;
        for &i in u.indices.iter().rev() {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, dim: d });
            }
            key = key * d + i;
        }
        counts[key] += u.delta as f64;
    }
    Ok(counts)
}

/// `||P - P_1 ⊗ ... ⊗ P_q||_1` with `P = counts / m`.
pub fn exact_tvd(counts: &[f64], q: usize, d: usize) -> Result<f64> {
    let size = cells(q, d)?;
    crate::error::check_dim(size, counts.len())?;
    let m: f64 = counts.iter().sum();
    if m == 0.0 {
        return Err(Error::EmptyInput);
    }
    let mut marginals = vec![vec![0.0; d]; q];
    for (key, &c) in counts.iter().enumerate() {
        let mut rem = key;
        for marg in marginals.iter_mut() {
            marg[rem % d] += c / m;
            rem /= d;
        }
    }
    let mut total = 0.0;
    for (key, &c) in counts.iter().enumerate() {
        let mut rem = key;
        let mut prod = 1.0;
        for marg in &marginals {
            prod *= marg[rem % d];
            rem /= d;
        }
        total += (c / m - prod).abs();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_two_by_two_is_one() {
        assert!((exact_tvd(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outer_products_are_independent() {
        let a = [3.0, 1.0, 0.0, 4.0];
        let b = [2.0, 5.0, 1.0, 1.0];
        let c = [1.0, 7.0, 2.0, 2.0];
        let mut counts = Vec::new();
        for z in c {
            for y in b {
                for x in a {
                    counts.push(x * y * z);
                }
            }
        }
        assert!(exact_tvd(&counts, 3, 4).unwrap() < 1e-12);
    }

    #[test]
    fn single_sample_and_errors() {
        assert_eq!(exact_tvd(&[0.0, 1.0, 0.0], 1, 3).unwrap(), 0.0);
        assert!(matches!(exact_tvd(&[0.0; 4], 2, 2), Err(Error::EmptyInput)));
        assert!(matches!(exact_tvd(&[], 8, 10), Err(Error::TooLarge(_))));
    }

    #[test]
    fn stream_counts_follow_key_order() {
        let s = vec![StreamUpdate::sample(vec![1, 0]), StreamUpdate::new(vec![0, 1], 3)];
        assert_eq!(count_tensor(&s, 2, 2).unwrap(), vec![0.0, 1.0, 3.0, 0.0]);
        assert!(count_tensor(&[StreamUpdate::sample(vec![2, 0])], 2, 2).is_err());
    }
}
