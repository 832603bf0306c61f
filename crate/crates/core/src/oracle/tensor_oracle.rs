//! Offline application of the tensor sketch: explicit per-mode matrices
//! multiplied into a materialized count tensor one mode at a time.

use crate::error::{check_dim, Result};
use crate::numerics::DenseMatrix;
use crate::tensor::TensorState;

/// Explicit `block x d` matrix of mode `mode`, read off the hash tables.
pub fn mode_matrix(state: &TensorState, mode: usize) -> DenseMatrix {
    let d = state.config().d;
    let params = &state.schedule().modes[mode - 1];
    let mut m = DenseMatrix::zeros(params.block(), d);
    for rep in 0..params.reps {
        let layout = state.layout(mode, rep);
        let per = layout.cells_per_level();
        let base = rep * layout.total_cells();
        for j in 0..d {
            for level in 0..=layout.level_of(j) {
                let h = layout.hashing(level);
                for r in 0..h.reps() {
                    let row = base + level * per + r * h.buckets() + h.bucket(r, j);
                    m.set(row, j, m.get(row, j) + h.sign(r, j));
                }
            }
        }
    }
    m
}

/// Mode-by-mode product of the explicit matrices with `counts` (mode 1 fastest).
pub fn materialized_sketch(state: &TensorState, counts: &[f64]) -> Result<Vec<f64>> {
    let q = state.config().q;
    let d = state.config().d;
    check_dim(d.pow(q as u32), counts.len())?;
    let mut cur = counts.to_vec();
    let mut inner = 1usize;
    for mode in 1..=q {
        let m = mode_matrix(state, mode);
        let outer = cur.len() / (inner * d);
        let mut next = vec![0.0; outer * m.rows() * inner];
        for o in 0..outer {
            for a in 0..m.rows() {
                let row = m.row(a);
                for (j, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let src = (o * d + j) * inner;
                    let dst = (o * m.rows() + a) * inner;
                    for k in 0..inner {
                        next[dst + k] += w * cur[src + k];
                    }
                }
            }
        }
        inner *= m.rows();
        cur = next;
    }
    Ok(cur)
}
