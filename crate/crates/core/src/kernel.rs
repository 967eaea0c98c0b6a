//! Affinity kernels, α-normalization and Markov (row) normalization.
//!
//! Kernels are built from squared Euclidean distances `D[i][j] = ‖x_i − x_j‖²`
//! either with a single scale `exp(−D/ε)` or with per-point adaptive scales
//! `exp(−c1[i]·D[i][j])`, where `c1[i]` is chosen so that a fixed number of
//! neighbors lie within `c1[i]·D ≤ 1/√2`. The measure on the data is counting
//! measure, so every integral becomes a plain sum.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_points, SquareMatrix};

/// Lower clamp applied after exponentials so that kernels stay strictly positive.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Floor applied to zero entries of user-supplied affinity matrices.
pub const AFFINITY_FLOOR: f64 = 1e-12;

const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_MAX: usize = 200_000;

/// `D[i][j] = Σ_k (x_ik − x_jk)²` for an `n × d` point matrix.
pub fn pairwise_sq_distances(points: &Array2<f64>) -> Result<SquareMatrix> {
    check_points(points)?;
    let n = points.nrows();
    let mut out = Array2::zeros((n, n));
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        if i != j {
            *v = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    });
    Ok(SquareMatrix::from_array_unchecked(out))
}

/// Per-point inverse scales `c1[i]` (units of 1/distance²).
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSet {
    pub c1: Array1<f64>,
    pub n_neighbors: usize,
}

/// Chooses `c1[i] = 1/(√2·s_i)` with `s_i` the `n_neighbors`-th smallest
/// distance from point `i` to the other points.
///
/// When duplicate points make `s_i` zero, the smallest strictly positive
/// distance in the row is used instead; a row with no positive distance at
/// all yields [`Error::DegenerateNeighborhood`].
pub fn adaptive_bandwidths(d: &SquareMatrix, n_neighbors: usize) -> Result<BandwidthSet> {
    let n = d.n();
    if n_neighbors == 0 || n_neighbors + 1 > n {
        return Err(Error::invalid(format!(
            "n_neighbors must lie in [1, {}], got {n_neighbors}",
            n.saturating_sub(1)
        )));
    }
    let a = d.as_array();
    let mut c1 = Array1::zeros(n);
    let mut others = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i).map(|j| a[[i, j]]));
        others.sort_by(f64::total_cmp);
        let mut s = others[n_neighbors - 1];
        if s <= 0.0 {
            s = others
                .iter()
                .copied()
                .find(|&v| v > 0.0)
                .ok_or(Error::DegenerateNeighborhood { row: i })?;
        }
        let mut c = 1.0 / (SQRT_2 * s);
        // rounding in 1/(√2 s) must never push the boundary point outside
        while c * s > FRAC_1_SQRT_2 {
            c = c.next_down();
        }
        c1[i] = c;
    }
    Ok(BandwidthSet { c1, n_neighbors })
}

/// Scale selection for [`affinity_kernel`].
#[derive(Debug, Clone, Copy)]
pub enum Bandwidth<'a> {
    /// `exp(−c1[i]·D[i][j])`
    Adaptive(&'a BandwidthSet),
    /// `exp(−D[i][j]/ε)`
    Scalar(f64),
}

/// Exponential affinity from a squared-distance matrix, optionally
/// symmetrized by the arithmetic mean `(K + Kᵀ)/2`.
pub fn affinity_kernel(d: &SquareMatrix, bandwidth: Bandwidth<'_>, symmetrize: bool) -> Result<SquareMatrix> {
    let n = d.n();
    let a = d.as_array();
    let mut k = match bandwidth {
        Bandwidth::Scalar(eps) => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
            }
            a.mapv(|v| (-v / eps).exp())
        }
        Bandwidth::Adaptive(bw) => {
            if bw.c1.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: bw.c1.len() });
            }
            if bw.c1.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(Error::invalid("bandwidths must be finite and positive"));
            }
            Array2::from_shape_fn((n, n), |(i, j)| (-bw.c1[i] * a[[i, j]]).exp())
        }
    };
    k.mapv_inplace(|v| v.max(POSITIVITY_FLOOR));
    if symmetrize {
        k = symmetrized(&k);
    }
    Ok(SquareMatrix::from_array_unchecked(k))
}

fn symmetrized(k: &Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (k[[i, j]] + k[[j, i]]))
}

/// `K'[i][j] = K[i][j] / (q[i]^α · q[j]^α)` with `q` the row sums of `K`.
pub fn alpha_normalize(k: &SquareMatrix, alpha: f64) -> Result<SquareMatrix> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    k.validate_affinity()?;
    if alpha == 0.0 {
        return Ok(k.clone());
    }
    let w = k.row_sums().mapv(|q| q.powf(alpha));
    let a = k.as_array();
    let n = k.n();
    let out = Array2::from_shape_fn((n, n), |(i, j)| (a[[i, j]] / (w[i] * w[j])).max(POSITIVITY_FLOOR));
    Ok(SquareMatrix::from_array_unchecked(out))
}

/// Row-stochastic Markov kernel with its stationary distribution.
///
/// The (pre-normalization) numerator is retained: it is the weight used by
/// the orthogonalization step, and when it is symmetric it gives π in
/// closed form as normalized row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticKernel {
    matrix: SquareMatrix,
    pi: Array1<f64>,
    numerator: SquareMatrix,
    numerator_symmetric: bool,
}

impl StochasticKernel {
    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn pi(&self) -> &Array1<f64> {
        &self.pi
    }

    pub fn numerator(&self) -> &SquareMatrix {
        &self.numerator
    }

    pub fn symmetric_numerator(&self) -> Option<&SquareMatrix> {
        self.numerator_symmetric.then_some(&self.numerator)
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Wraps a symmetric doubly stochastic matrix without renormalizing it.
    /// Its stationary distribution is the normalized row sums (uniform up to
    /// the scaling tolerance).
    pub fn from_doubly_stochastic(p: SquareMatrix) -> Result<Self> {
        p.validate_affinity()?;
        if !p.is_symmetric(symmetry_tol(&p)) {
            return Err(Error::invalid("doubly stochastic kernel must be symmetric"));
        }
        let pi = closed_form_pi(&p);
        Ok(StochasticKernel {
            matrix: p.clone(),
            pi,
            numerator: p,
            numerator_symmetric: true,
        })
    }
}

fn symmetry_tol(k: &SquareMatrix) -> f64 {
    1e-12 * k.as_array().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn closed_form_pi(k: &SquareMatrix) -> Array1<f64> {
    let d = k.row_sums();
    let total = d.sum();
    d / total
}

/// `matrix[i][j] = K[i][j] / Σ_j K[i][j]`; π is computed by
/// [`stationary_distribution`].
pub fn row_normalize(k: &SquareMatrix) -> Result<StochasticKernel> {
    k.validate_affinity()?;
    let d = k.row_sums();
    let a = k.as_array();
    let n = k.n();
    let matrix = SquareMatrix::from_array_unchecked(Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / d[i]));
    let numerator_symmetric = k.is_symmetric(symmetry_tol(k));
    let pi = stationary_distribution(&matrix, numerator_symmetric.then_some(k))?;
    Ok(StochasticKernel {
        matrix,
        pi,
        numerator: k.clone(),
        numerator_symmetric,
    })
}

/// Stationary distribution of a row-stochastic positive matrix.
///
/// With a symmetric numerator `K` this is `π[i] = Σ_j K[i][j] / Σ_{ij} K[i][j]`;
/// otherwise power iteration on the transpose is used.
pub fn stationary_distribution(p: &SquareMatrix, symmetric_numerator: Option<&SquareMatrix>) -> Result<Array1<f64>> {
    match symmetric_numerator {
        Some(k) => {
            if k.n() != p.n() {
                return Err(Error::DimensionMismatch { expected: p.n(), got: k.n() });
            }
            Ok(closed_form_pi(k))
        }
        None => power_iteration_pi(p, POWER_ITERATION_TOL, POWER_ITERATION_MAX),
    }
}

/// Power iteration `πᵀ ← πᵀ p` from the uniform vector until the ℓ¹ change
/// drops below `tol`.
pub fn power_iteration_pi(p: &SquareMatrix, tol: f64, max_iter: usize) -> Result<Array1<f64>> {
    let n = p.n();
    let a = p.as_array();
    let mut pi = Array1::from_elem(n, 1.0 / n as f64);
    let mut delta = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = pi.dot(a);
        let s = next.sum();
        next /= s;
        delta = next.iter().zip(pi.iter()).map(|(x, y)| (x - y).abs()).sum();
        pi = next;
        if delta < tol {
            return Ok(pi);
        }
    }
    Err(Error::ConvergenceFailure {
        what: "stationary distribution power iteration",
        iterations: max_iter,
        residual: delta,
        trace: None,
    })
}

/// How the affinity scale is chosen when building a kernel from points or distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Neighbors(usize),
    Epsilon(f64),
}

/// Options shared by the kernel builders below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub bandwidth: BandwidthChoice,
    pub alpha: f64,
    pub symmetrize: bool,
}

/// Points → squared distances → affinity → α-normalization → Markov kernel.
pub fn kernel_from_points(points: &Array2<f64>, opts: &KernelOptions) -> Result<StochasticKernel> {
    let d = pairwise_sq_distances(points)?;
    kernel_from_distances(&d, opts)
}

/// Squared-distance matrix → Markov kernel.
pub fn kernel_from_distances(d: &SquareMatrix, opts: &KernelOptions) -> Result<StochasticKernel> {
    d.validate_distance()?;
    let k = match opts.bandwidth {
        BandwidthChoice::Neighbors(nn) => {
            let bw = adaptive_bandwidths(d, nn.min(d.n().saturating_sub(1)).max(1))?;
            affinity_kernel(d, Bandwidth::Adaptive(&bw), opts.symmetrize)?
        }
        BandwidthChoice::Epsilon(eps) => affinity_kernel(d, Bandwidth::Scalar(eps), opts.symmetrize)?,
    };
    row_normalize(&alpha_normalize(&k, opts.alpha)?)
}

/// Nonnegative affinity matrix → Markov kernel. Entries below
/// [`AFFINITY_FLOOR`] are raised to it; negative entries are rejected.
pub fn kernel_from_affinity(k: &SquareMatrix, alpha: f64, symmetrize: bool) -> Result<StochasticKernel> {
    if let Some(((i, j), v)) = k.as_array().indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::invalid(format!("negative affinity {v} at ({i}, {j})")));
    }
    let mut a = k.as_array().mapv(|v| v.max(AFFINITY_FLOOR));
    if symmetrize {
        a = symmetrized(&a);
    }
    row_normalize(&alpha_normalize(&SquareMatrix::from_array_unchecked(a), alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sq(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn distances_of_small_point_sets() {
        let d = pairwise_sq_distances(&array![[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(d.as_array(), &array![[0.0, 25.0], [25.0, 0.0]]);

        let d = pairwise_sq_distances(&array![[7.0]]).unwrap();
        assert_eq!(d.as_array(), &array![[0.0]]);

        let d = pairwise_sq_distances(&array![[0.0], [1.0], [3.0]]).unwrap();
        assert_eq!(d.as_array(), &array![[0.0, 1.0, 9.0], [1.0, 0.0, 4.0], [9.0, 4.0, 0.0]]);
    }

    #[test]
    fn distances_reject_nan() {
        let err = pairwise_sq_distances(&array![[0.0], [f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn bandwidth_from_second_neighbor() {
        // row 0 sees distances [1, 4, 9]
        let d = sq(&[&[0., 1., 4., 9.], &[1., 0., 1., 4.], &[4., 1., 0., 1.], &[9., 4., 1., 0.]]);
        let bw = adaptive_bandwidths(&d, 2).unwrap();
        assert_abs_diff_eq!(bw.c1[0], 1.0 / (4.0 * SQRT_2), epsilon = 1e-15);
        assert_abs_diff_eq!(bw.c1[0], 0.176777, epsilon = 1e-6);
        let inside = (1..4).filter(|&j| bw.c1[0] * d[(0, j)] <= FRAC_1_SQRT_2).count();
        assert_eq!(inside, 2);
    }

    #[test]
    fn equal_distances_give_equal_bandwidths() {
        let d = SquareMatrix::from_fn(5, |(i, j)| if i == j { 0.0 } else { 2.5 }).unwrap();
        let bw = adaptive_bandwidths(&d, 3).unwrap();
        assert!(bw.c1.iter().all(|&c| c == bw.c1[0]));
    }

    #[test]
    fn all_neighbors_uses_the_farthest_point() {
        let d = sq(&[&[0., 1., 4.], &[1., 0., 9.], &[4., 9., 0.]]);
        let bw = adaptive_bandwidths(&d, 2).unwrap();
        for (i, far) in [4.0, 9.0, 9.0].into_iter().enumerate() {
            assert_abs_diff_eq!(bw.c1[i], 1.0 / (SQRT_2 * far), epsilon = 1e-15);
        }
    }

    #[test]
    fn duplicates_fall_back_to_smallest_positive_distance() {
        // points 0 and 1 coincide
        let d = sq(&[&[0., 0., 4.], &[0., 0., 4.], &[4., 4., 0.]]);
        let bw = adaptive_bandwidths(&d, 1).unwrap();
        assert_abs_diff_eq!(bw.c1[0], 1.0 / (SQRT_2 * 4.0), epsilon = 1e-15);
        let all_same = SquareMatrix::from_fn(3, |_| 0.0).unwrap();
        assert!(matches!(
            adaptive_bandwidths(&all_same, 1),
            Err(Error::DegenerateNeighborhood { row: 0 })
        ));
    }

    #[test]
    fn bandwidth_neighbor_count_is_validated() {
        let d = sq(&[&[0., 1.], &[1., 0.]]);
        assert!(adaptive_bandwidths(&d, 0).is_err());
        assert!(adaptive_bandwidths(&d, 2).is_err());
    }

    #[test]
    fn affinity_values() {
        let d = sq(&[&[0., 1.], &[1., 0.]]);
        let k = affinity_kernel(&d, Bandwidth::Scalar(1.0), false).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_abs_diff_eq!(k[(0, 1)], 0.3678794, epsilon = 1e-7);

        let bw = BandwidthSet { c1: array![1.0, 2.0], n_neighbors: 1 };
        let k = affinity_kernel(&d, Bandwidth::Adaptive(&bw), true).unwrap();
        let expected = ((-1.0f64).exp() + (-2.0f64).exp()) / 2.0;
        assert_abs_diff_eq!(k[(0, 1)], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(0, 1)], 0.2516074, epsilon = 1e-7);
        assert_eq!(k[(0, 1)], k[(1, 0)]);

        let raw = affinity_kernel(&d, Bandwidth::Adaptive(&bw), false).unwrap();
        assert_ne!(raw[(0, 1)], raw[(1, 0)]);
    }

    #[test]
    fn affinity_clamps_underflow() {
        let d = sq(&[&[0., 1e6], &[1e6, 0.]]);
        let k = affinity_kernel(&d, Bandwidth::Scalar(1e-3), false).unwrap();
        assert_eq!(k[(0, 1)], POSITIVITY_FLOOR);
    }

    #[test]
    fn alpha_normalization_examples() {
        let k = sq(&[&[1., 0.5], &[0.5, 1.]]);
        assert_eq!(alpha_normalize(&k, 0.0).unwrap(), k);

        let ones = sq(&[&[1., 1.], &[1., 1.]]);
        let out = alpha_normalize(&ones, 1.0).unwrap();
        assert!(out.as_array().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let out = alpha_normalize(&k, 0.5).unwrap();
        for (a, b) in out.as_array().iter().zip(k.as_array().iter()) {
            assert_abs_diff_eq!(*a, b / 1.5, epsilon = 1e-15);
        }
        assert!(alpha_normalize(&k, -1.0).is_err());
    }

    #[test]
    fn row_normalization_examples() {
        let p = row_normalize(&sq(&[&[1., 1.], &[1., 1.]])).unwrap();
        assert_eq!(p.matrix().as_array(), &array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(p.pi(), &array![0.5, 0.5]);

        let p = row_normalize(&sq(&[&[2., 1.], &[1., 2.]])).unwrap();
        assert_abs_diff_eq!(p.matrix()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.matrix()[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(p.pi(), &array![0.5, 0.5]);
        let oracle = power_iteration_pi(p.matrix(), 1e-14, 10_000).unwrap();
        assert_abs_diff_eq!(oracle[0], 0.5, epsilon = 1e-12);
        assert!(p.symmetric_numerator().is_some());
    }

    #[test]
    fn uniform_stationary_distribution() {
        let k = SquareMatrix::from_fn(3, |_| 1.0).unwrap();
        let p = row_normalize(&k).unwrap();
        for &v in p.pi() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn asymmetric_numerator_uses_power_iteration() {
        let k = sq(&[&[1., 2., 3.], &[1., 1., 1.], &[5., 1., 2.]]);
        let p = row_normalize(&k).unwrap();
        assert!(p.symmetric_numerator().is_none());
        let back = p.pi().dot(p.matrix().as_array());
        for (a, b) in back.iter().zip(p.pi().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(p.pi().sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn doubly_stochastic_kernel_has_uniform_pi() {
        let p = sq(&[&[0.7, 0.3], &[0.3, 0.7]]);
        let k = StochasticKernel::from_doubly_stochastic(p).unwrap();
        assert_eq!(k.pi(), &array![0.5, 0.5]);
    }

    #[test]
    fn affinity_builder_floors_zeros_and_rejects_negatives() {
        let k = sq(&[&[1., 0.], &[0., 1.]]);
        let p = kernel_from_affinity(&k, 0.0, true).unwrap();
        assert!(p.matrix().min_entry() > 0.0);
        let neg = sq(&[&[1., -1.], &[-1., 1.]]);
        assert!(kernel_from_affinity(&neg, 0.0, true).is_err());
    }
}
