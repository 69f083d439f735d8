//! ReLU random-projection feature map: rows of the projection matrix are
//! sampled uniformly from the unit sphere (a normalized Gaussian draw), and
//! the representation of an input `x` is `ReLU(W x)`. There is no bias
//! term, and `ReLU(0) = 0`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::matmul_abt_into;
use crate::rng::substream;

/// An `m × D` projection with unit-norm rows.
#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    rows: Array2<f64>,
    seed: u64,
}

impl ProjectionMatrix {
    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn m(&self) -> usize {
        self.rows.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Projection using only the first `m` rows. Because rows are i.i.d.,
    /// prefixes of one draw give nested projections for a model-size sweep.
    pub fn prefix(&self, m: usize) -> Result<ProjectionMatrix> {
        if m == 0 || m > self.m() {
            return Err(Error::config(format!("prefix size {m} outside 1..={}", self.m())));
        }
        Ok(ProjectionMatrix { rows: self.rows.slice(ndarray::s![0..m, ..]).to_owned(), seed: self.seed })
    }
}

/// Samples `m` projection directions i.i.d. uniform on the unit sphere
/// `S^{D−1}`. Deterministic given `seed`.
pub fn sample_projection(input_dim: usize, m: usize, seed: u64) -> Result<ProjectionMatrix> {
    if input_dim == 0 {
        return Err(Error::config("projection input dimension must be ≥ 1"));
    }
    if m == 0 {
        return Err(Error::config("projection count m must be ≥ 1"));
    }
    let mut rng = substream(seed, "projection", 0);
    let mut rows = Array2::zeros((m, input_dim));
    for mut row in rows.rows_mut() {
        loop {
            let mut sq = 0.0;
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z;
                sq += z * z;
            }
            // A zero draw has probability zero; resample rather than divide by it.
            if sq > 0.0 {
                let inv = sq.sqrt().recip();
                row.mapv_inplace(|v| v * inv);
                break;
            }
        }
    }
    Ok(ProjectionMatrix { rows, seed })
}

/// Applies the feature map: `out[i][j] = max(0, w_j · x_i)`.
pub fn apply_features(proj: &ProjectionMatrix, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != proj.input_dim() {
        return Err(Error::dimension(format!(
            "input has {} columns, projection expects {}",
            x.ncols(),
            proj.input_dim()
        )));
    }
    let mut out = Array2::zeros((x.nrows(), proj.m()));
    matmul_abt_into(x, proj.rows(), out.view_mut());
    out.mapv_inplace(|v| v.max(0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rows_are_unit_norm() {
        let proj = sample_projection(200, 50, 1).unwrap();
        for row in proj.rows().rows() {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12, "row norm {norm}");
        }
    }

    #[test]
    fn sphere_rows_are_near_orthogonal_on_average() {
        // Mean pairwise inner product of uniform sphere points is 0 with
        // per-pair variance 1/D.
        let d = 200;
        let m = 400;
        let proj = sample_projection(d, m, 7).unwrap();
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..m {
            for j in (i + 1)..m {
                sum += proj.rows().row(i).dot(&proj.rows().row(j));
                pairs += 1;
            }
        }
        let mean = sum / pairs as f64;
        let tol = 4.0 / ((d * pairs) as f64).sqrt();
        assert!(mean.abs() < tol, "mean inner product {mean} vs tol {tol}");
    }

    #[test]
    fn supports_ten_thousand_projections() {
        let proj = sample_projection(10, 10_000, 0).unwrap();
        assert_eq!(proj.m(), 10_000);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(sample_projection(0, 5, 0).is_err());
        assert!(sample_projection(5, 0, 0).is_err());
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let proj = sample_projection(3, 4, 2).unwrap();
        let x = Array2::zeros((2, 3));
        let z = apply_features(&proj, x.view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_clamps_negative_preactivations() {
        let proj = ProjectionMatrix { rows: array![[1.0, 0.0], [0.0, 1.0]], seed: 0 };
        let x = array![[2.0, -1.0], [-3.0, 5.0]];
        let z = apply_features(&proj, x.view()).unwrap();
        assert_eq!(z, array![[2.0, 0.0], [0.0, 5.0]]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let proj = sample_projection(3, 2, 0).unwrap();
        let x = Array2::zeros((1, 4));
        assert!(apply_features(&proj, x.view()).is_err());
    }

    #[test]
    fn positive_homogeneity_and_row_permutation() {
        let proj = sample_projection(5, 8, 3).unwrap();
        let x = array![[0.3, -1.0, 2.0, 0.0, 1.5], [1.0, 1.0, -1.0, 0.25, -2.0]];
        let z = apply_features(&proj, x.view()).unwrap();
        let z2 = apply_features(&proj, (&x * 2.0).view()).unwrap();
        for (a, b) in z.iter().zip(z2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        let swapped = array![[1.0, 1.0, -1.0, 0.25, -2.0], [0.3, -1.0, 2.0, 0.0, 1.5]];
        let zs = apply_features(&proj, swapped.view()).unwrap();
        assert_eq!(zs.row(0), z.row(1));
        assert_eq!(zs.row(1), z.row(0));
    }

    #[test]
    fn prefix_rows_match_full_draw() {
        let full = sample_projection(6, 20, 9).unwrap();
        let small = full.prefix(5).unwrap();
        assert_eq!(small.rows(), full.rows().slice(ndarray::s![0..5, ..]));
    }
}
