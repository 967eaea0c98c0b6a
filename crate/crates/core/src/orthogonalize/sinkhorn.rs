//! Symmetric Sinkhorn scaling `D N D` of a symmetric positive matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// Finds `d > 0` with `diag(d) N diag(d)` doubly stochastic, using the damped
/// fixed-point update `d ← √(d / (N d))`, and returns the scaled matrix.
///
/// The result is exactly symmetric (upper triangle mirrored) and its row and
/// column sums deviate from 1 by less than `tol`.
pub fn symmetric_sinkhorn(n_mat: &SquareMatrix, tol: f64, max_iter: usize) -> Result<SquareMatrix> {
    n_mat.validate_affinity()?;
    let a = n_mat.as_array();
    let mut d: Array1<f64> = n_mat.row_sums().mapv(|s| 1.0 / s.sqrt());
    let mut err = f64::INFINITY;
    for _ in 0..max_iter {
        let nd = a.dot(&d);
        err = d.iter().zip(nd.iter()).fold(0.0f64, |m, (di, ndi)| m.max((di * ndi - 1.0).abs()));
        if err < 0.25 * tol {
            let out = scaled(a, &d);
            let worst = max_sum_deviation(&out);
            if worst < tol {
                return Ok(SquareMatrix::from_array_unchecked(out));
            }
            err = worst;
        }
        d = d.iter().zip(nd.iter()).map(|(di, ndi)| (di / ndi).sqrt()).collect();
    }
    Err(Error::ConvergenceFailure {
        what: "Sinkhorn scaling",
        iterations: max_iter,
        residual: err,
        trace: None,
    })
}

fn scaled(a: &Array2<f64>, d: &Array1<f64>) -> Array2<f64> {
    let n = d.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = d[i] * a[[i, j]] * d[j];
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Largest `|row sum − 1|` or `|column sum − 1|`.
pub fn max_sum_deviation(m: &Array2<f64>) -> f64 {
    let rows = m.rows().into_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = m.columns().into_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}
