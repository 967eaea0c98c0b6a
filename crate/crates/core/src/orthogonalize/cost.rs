//! Misalignment cost and orthogonalization functionals.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::StochasticKernel;
use crate::matrix::SquareMatrix;
use crate::spectral::diffusion_distance_matrix;

/// Gromov-Wasserstein cost of swapping points `i` and `j` while every other
/// point stays fixed: `G[i][j] = 4·Σ_w (d[i][w] − d[j][w])²`.
pub fn misalignment_cost(d: &SquareMatrix, i: usize, j: usize) -> Result<f64> {
    let n = d.n();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("index out of range: ({i}, {j}) for n = {n}")));
    }
    Ok(misalignment_entry(d.as_array(), i, j))
}

fn misalignment_entry(a: &Array2<f64>, i: usize, j: usize) -> f64 {
    if i == j {
        return 0.0;
    }
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    4.0 * a
        .row(i)
        .iter()
        .zip(a.row(j).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}

/// Full matrix of [`misalignment_cost`].
pub fn misalignment_matrix(d: &SquareMatrix) -> SquareMatrix {
    let n = d.n();
    let a = d.as_array();
    SquareMatrix::from_array_unchecked(Array2::from_shape_fn((n, n), |(i, j)| misalignment_entry(a, i, j)))
}

/// Rows of `p` divided by `√π` columnwise: `p[i][w] / √π[w]`.
///
/// The misalignment cost of this matrix is four times the diffusion distance of `p`.
pub fn sqrt_pi_scaled(p: &StochasticKernel) -> SquareMatrix {
    let s = p.pi().mapv(f64::sqrt);
    let pm = p.matrix().as_array();
    let n = p.n();
    SquareMatrix::from_array_unchecked(Array2::from_shape_fn((n, n), |(i, w)| pm[[i, w]] / s[w]))
}

/// `O_{p̃}(p) = Σ_{ij} p[i][j] · L_{p̃}(i,j)`.
pub fn ortho_functional(p: &StochasticKernel, p_tilde: &StochasticKernel) -> Result<f64> {
    if p.n() != p_tilde.n() {
        return Err(Error::DimensionMismatch { expected: p_tilde.n(), got: p.n() });
    }
    let l = diffusion_distance_matrix(p_tilde);
    Ok(weighted_sum(p.matrix(), &l))
}

pub(crate) fn weighted_sum(p: &SquareMatrix, l: &SquareMatrix) -> f64 {
    p.as_array().iter().zip(l.as_array().iter()).map(|(a, b)| a * b).sum()
}

const DS_CHECK_TOL: f64 = 1e-8;

/// Doubly stochastic orthogonalization functional
///
/// ```text
/// Ô(p) = Σ_{x,y,w} [ p(x,y)(p(x,w) − p(y,w))² − 2 p(x,y)² p(x,w) + (4/3) p(x,w) p(w,y) p(x,y) ]
/// ```
///
/// evaluated term by term. `p` must be symmetric with unit row and column
/// sums (within 1e-8).
pub fn ds_functional(p: &SquareMatrix) -> Result<f64> {
    let a = p.as_array();
    if p.max_asymmetry() > DS_CHECK_TOL {
        return Err(Error::invalid("Ô requires a symmetric kernel"));
    }
    let dev = super::sinkhorn::max_sum_deviation(a);
    if dev > DS_CHECK_TOL {
        return Err(Error::invalid(format!("Ô requires a doubly stochastic kernel (deviation {dev:e})")));
    }
    let n = p.n();
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            let pxy = a[[x, y]];
            let mut acc = 0.0;
            for w in 0..n {
                let (pxw, pyw) = (a[[x, w]], a[[y, w]]);
                let diff = pxw - pyw;
                acc += pxy * diff * diff - 2.0 * pxy * pxy * pxw + (4.0 / 3.0) * pxw * a[[w, y]] * pxy;
            }
            total += acc;
        }
    }
    Ok(total)
}
