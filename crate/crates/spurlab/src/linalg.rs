//! Small dense linear-algebra helpers shared across the crate: a
//! row-block-parallel matrix product, Gram matrices, and an in-place
//! Cholesky solve for the SPD systems that show up in the margin QP and
//! the representer recovery.

use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};

/// Rows per parallel chunk in the block products. Large enough that the
/// per-chunk GEMM dominates scheduling overhead.
const CHUNK: usize = 128;

/// `out = a · bᵀ`, parallelized over row blocks of `a`.
pub fn matmul_abt_into(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
    debug_assert_eq!(a.ncols(), b.ncols());
    debug_assert_eq!(out.nrows(), a.nrows());
    debug_assert_eq!(out.ncols(), b.nrows());
    let bt = b.t();
    out.axis_chunks_iter_mut(Axis(0), CHUNK)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), CHUNK).into_par_iter())
        .for_each(|(mut out_chunk, a_chunk)| {
            general_mat_mul(1.0, &a_chunk, &bt, 0.0, &mut out_chunk);
        });
}

/// Gram matrix `x · xᵀ` (n×n), parallelized over row blocks.
pub fn gram(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut g = Array2::zeros((n, n));
    matmul_abt_into(x, x, g.view_mut());
    // Symmetrize to wash out accumulation-order differences between blocks.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g[[i, j]] + g[[j, i]]);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

/// Solves the SPD system `a · x = b` by Cholesky factorization.
///
/// `a` is consumed as workspace. Fails with [`Error::Numerical`] when a
/// pivot drops below `1e-14` times the largest diagonal entry, which for
/// our callers signals a degenerate subproblem rather than a user error.
pub fn solve_spd(mut a: Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::dimension(format!(
            "solve_spd: matrix {}x{} with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max).max(1e-300);
    // In-place lower Cholesky.
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > 1e-14 * max_diag) {
            return Err(Error::numerical(format!("Cholesky pivot {d:.3e} at index {j}")));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= a[[i, k]] * x[k];
        }
        x[i] = s / a[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= a[[k, i]] * x[k];
        }
        x[i] = s / a[[i, i]];
    }
    Ok(x)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn spd_solve_matches_hand_computation() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let x = solve_spd(a, &[2.0, 5.0]).unwrap();
        // inverse of [[4,2],[2,3]] is 1/8 [[3,-2],[-2,4]]
        assert_abs_diff_eq!(x[0], (3.0 * 2.0 - 2.0 * 5.0) / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], (-2.0 * 2.0 + 4.0 * 5.0) / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(solve_spd(a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gram_is_symmetric_product() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let g = gram(x.view());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g[[i, j]], x.row(i).dot(&x.row(j)), epsilon = 1e-12);
                assert_eq!(g[[i, j]], g[[j, i]]);
            }
        }
    }
}
