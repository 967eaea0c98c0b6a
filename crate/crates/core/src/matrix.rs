//! Dense square matrices used for distances, affinities and kernels.

use std::ops::Index;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Dense `n × n` real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(Array2<f64>);

impl SquareMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        if r != c {
            return Err(Error::invalid(format!("matrix is not square: {r} x {c}")));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry {v} at ({i}, {j})")));
        }
        Ok(SquareMatrix(data))
    }

    /// Builds a matrix from row vectors; convenient in tests and examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Self::new(data)
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), f))
    }

    /// Wraps an array the caller knows is square and finite.
    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert_eq!(data.nrows(), data.ncols());
        SquareMatrix(data)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.0.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.0.sum_axis(Axis(0))
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.0[[i, j]] - self.0[[j, i]]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    /// Sup-norm distance `max |a_ij - b_ij|`.
    pub fn sup_distance(&self, other: &SquareMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks the `distance` tag: nonnegative, zero diagonal, symmetric.
    pub fn validate_distance(&self) -> Result<()> {
        if let Some(((i, j), v)) = self.0.indexed_iter().find(|(_, v)| **v < 0.0) {
            return Err(Error::invalid(format!("negative distance {v} at ({i}, {j})")));
        }
        if let Some(i) = (0..self.n()).find(|&i| self.0[[i, i]] != 0.0) {
            return Err(Error::invalid(format!("distance diagonal is nonzero at row {i}")));
        }
        let asym = self.max_asymmetry();
        if asym > 1e-12 * (1.0 + self.0.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            return Err(Error::invalid(format!("distance matrix is not symmetric ({asym:e})")));
        }
        Ok(())
    }

    /// Checks the `affinity` tag: strictly positive entries.
    pub fn validate_affinity(&self) -> Result<()> {
        if let Some(((i, j), v)) = self.0.indexed_iter().find(|(_, v)| **v <= 0.0) {
            return Err(Error::invalid(format!("affinity entry {v} at ({i}, {j}) is not positive")));
        }
        Ok(())
    }

    /// `P M Pᵀ` for the permutation mapping new index `k` to old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> SquareMatrix {
        let n = self.n();
        assert_eq!(perm.len(), n);
        SquareMatrix(Array2::from_shape_fn((n, n), |(i, j)| self.0[[perm[i], perm[j]]]))
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[[i, j]]
    }
}

/// Validates an `n × d` point matrix.
pub(crate) fn check_points(points: &Array2<f64>) -> Result<()> {
    let (n, d) = points.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("point matrix must be non-empty, got {n} x {d}")));
    }
    if let Some(((i, j), v)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coordinate {v} at point {i}, column {j}")));
    }
    Ok(())
}
