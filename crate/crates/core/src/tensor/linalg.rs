//! Row-major matrix kernels backing the convolution layers.
//!
//! Every output element is produced by exactly one task with a fixed inner
//! summation order, so results are bit-identical regardless of the rayon
//! thread count.

use super::Scalar;
use rayon::prelude::*;

/// Rows per parallel block; keeps a block of C plus one row of B resident
/// in cache while streaming.
const ROW_BLOCK: usize = 8;

/// `c += a * b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    c.par_chunks_mut(ROW_BLOCK * n)
        .enumerate()
        .for_each(|(block, c_block)| {
            let i0 = block * ROW_BLOCK;
            let rows = c_block.len() / n;
            for p in 0..k {
                let b_row = &b[p * n..p * n + n];
                for r in 0..rows {
                    let a_ip = a[(i0 + r) * k + p];
                    let c_row = &mut c_block[r * n..r * n + n];
                    for j in 0..n {
                        c_row[j] = a_ip.mul_add(b_row[j], c_row[j]);
                    }
                }
            }
        });
}

/// Out-of-place transpose of a row-major `[rows, cols]` matrix.
pub fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(src.len(), rows * cols);
    let mut dst = vec![T::zero(); src.len()];
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        let r1 = (r0 + TILE).min(rows);
        for c0 in (0..cols).step_by(TILE) {
            let c1 = (c0 + TILE).min(cols);
            for r in r0..r1 {
                for c in c0..c1 {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    dst
}
