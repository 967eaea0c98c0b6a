//! Spectral decomposition of reversible Markov kernels and diffusion distances.
//!
//! For a kernel `p` with stationary distribution `π`, the conjugate
//! `a(x,y) = √(π(x)/π(y))·p(x,y)` is symmetric whenever `p` comes from a
//! symmetric numerator. Its orthonormal eigenvectors `φ_l` give the
//! bi-orthogonal right/left systems `ψ_l = φ_l/√π` and `ϕ_l = φ_l·√π`, with
//!
//! ```text
//! p(x,y) = Σ_l λ_l ψ_l(x) ϕ_l(y)
//! L_p(x,y) = Σ_w (p(x,w) − p(y,w))² / π(w) = Σ_l λ_l² (ψ_l(x) − ψ_l(y))²
//! ```
//!
//! `√π` is always an eigenvector of `a` with eigenvalue 1. It is deflated with
//! a Householder reflection before the symmetric eigensolve, so `ψ_1 ≡ 1`
//! holds exactly even when the kernel has several eigenvalues numerically
//! equal to 1 (nearly decoupled clusters).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, Zip};

use crate::error::{Error, Result};
use crate::kernel::StochasticKernel;
use crate::matrix::SquareMatrix;

const CONJUGATE_SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues ordered by descending modulus (`λ_1 = 1` first) with the
/// bi-orthogonal eigenvector systems stored column-wise.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Column `l` is the right eigenvector `ψ_l`, normalized so `‖√π·ψ_l‖₂ = 1`.
    pub psi: Array2<f64>,
    /// Column `l` is the left eigenvector `ϕ_l = ψ_l·π`.
    pub phi: Array2<f64>,
    pub pi: Array1<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_l λ_l ψ_l(x) ϕ_l(y)`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.psi * &self.eigenvalues;
        scaled.dot(&self.phi.t())
    }

    /// Largest deviation of `Σ_x ψ_j(x) ϕ_i(x)` from `δ_ij`.
    pub fn bi_orthogonality_error(&self) -> f64 {
        let g = self.psi.t().dot(&self.phi);
        let mut worst = 0.0f64;
        for ((i, j), v) in g.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }

    pub fn spectral_sum(&self) -> f64 {
        self.eigenvalues.sum()
    }
}

/// Eigendecomposition of `p` through its symmetric conjugate.
///
/// Fails with [`Error::NotConjugateSymmetric`] when `p` is not reversible with
/// respect to its stationary distribution (beyond 1e-8).
pub fn decompose(p: &StochasticKernel) -> Result<SpectralDecomposition> {
    let n = p.n();
    let pm = p.matrix().as_array();
    let pi = p.pi().clone();
    let s = pi.mapv(f64::sqrt);

    let a = DMatrix::from_fn(n, n, |i, j| s[i] / s[j] * pm[[i, j]]);
    let mut deviation = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            deviation = deviation.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if deviation > CONJUGATE_SYMMETRY_TOL {
        return Err(Error::NotConjugateSymmetric { deviation });
    }
    let a = (&a + a.transpose()) * 0.5;

    // u = √π is a unit eigenvector of a for eigenvalue 1; reflect it onto e_1.
    let u = DVector::from_iterator(n, s.iter().copied());
    let reflector = Householder::onto_first_axis(&u);
    let hah = reflector.conjugate(&a);

    let mut values = vec![1.0];
    let mut vectors: Vec<DVector<f64>> = vec![u.clone()];
    if n > 1 {
        let rest = hah.view((1, 1), (n - 1, n - 1)).into_owned();
        let rest = (&rest + rest.transpose()) * 0.5;
        let eig = SymmetricEigen::new(rest);
        let mut order: Vec<usize> = (0..n - 1).collect();
        order.sort_by(|&x, &y| {
            let (lx, ly) = (eig.eigenvalues[x], eig.eigenvalues[y]);
            ly.abs().total_cmp(&lx.abs()).then(ly.total_cmp(&lx))
        });
        for k in order {
            let mut padded = DVector::zeros(n);
            padded.rows_mut(1, n - 1).copy_from(&eig.eigenvectors.column(k));
            let mut v = reflector.apply(&padded);
            canonical_sign(&mut v);
            values.push(eig.eigenvalues[k]);
            vectors.push(v);
        }
    }

    let mut psi = Array2::zeros((n, n));
    let mut phi = Array2::zeros((n, n));
    for (l, v) in vectors.iter().enumerate() {
        for x in 0..n {
            psi[[x, l]] = v[x] / s[x];
            phi[[x, l]] = v[x] * s[x];
        }
    }
    // ψ_1 ≡ 1 exactly
    psi.column_mut(0).fill(1.0);
    phi.column_mut(0).assign(&pi);

    Ok(SpectralDecomposition {
        eigenvalues: Array1::from(values),
        psi,
        phi,
        pi,
    })
}

/// `H = I − τ v vᵀ` with `H u = e_1` for a unit vector `u`.
struct Householder {
    v: DVector<f64>,
    tau: f64,
}

impl Householder {
    fn onto_first_axis(u: &DVector<f64>) -> Self {
        let mut v = u.clone();
        v[0] -= 1.0;
        let vv = v.dot(&v);
        let tau = if vv > 0.0 { 2.0 / vv } else { 0.0 };
        Householder { v, tau }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.v * (self.tau * self.v.dot(x))
    }

    /// `H A H` for symmetric `A`.
    fn conjugate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let p = a * &self.v * self.tau;
        let k = 0.5 * self.tau * self.v.dot(&p);
        let w = &p - &self.v * k;
        a - &self.v * w.transpose() - &w * self.v.transpose()
    }
}

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// a relative 1e-9 of the maximum count as tied; the first of them decides.
fn canonical_sign(v: &mut DVector<f64>) {
    let max = v.amax();
    let lead = v.iter().copied().find(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0.0);
    if lead < 0.0 {
        v.neg_mut();
    }
}

/// Rescales an arbitrarily normalized right eigenvector `v` of `p` to the
/// ψ-normalization `ψ = v / ‖√π·v‖₂`.
pub fn psi_from_right_eigenvector(v: &Array1<f64>, pi: &Array1<f64>) -> Result<Array1<f64>> {
    if v.len() != pi.len() {
        return Err(Error::DimensionMismatch { expected: pi.len(), got: v.len() });
    }
    let norm = v.iter().zip(pi.iter()).map(|(x, p)| x * x * p).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::invalid("eigenvector has zero weighted norm"));
    }
    Ok(v / norm)
}

/// Diffusion coordinates `λ_l^t ψ_l` for the leading `m` eigenpairs.
///
/// With `drop_trivial` the constant first column is omitted, leaving `m − 1`
/// columns. Integer `t` keeps the sign of negative eigenvalues; for
/// non-integer `t` negative eigenvalues contribute `|λ|^t` and a warning is
/// logged (distances only ever use `λ^{2t}`).
pub fn diffusion_coordinates(s: &SpectralDecomposition, t: f64, m: usize, drop_trivial: bool) -> Result<Array2<f64>> {
    let n = s.n();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("coordinate count must lie in [1, {n}], got {m}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("diffusion time must be finite and >= 0, got {t}")));
    }
    let integer_t = t.fract() == 0.0 && t <= i32::MAX as f64;
    let mut warned = false;
    let start = usize::from(drop_trivial);
    let mut out = Array2::zeros((n, m - start));
    for (col, l) in (start..m).enumerate() {
        let lambda = s.eigenvalues[l];
        let scale = if integer_t {
            lambda.powi(t as i32)
        } else {
            if lambda < 0.0 && !warned {
                log::warn!("negative eigenvalue {lambda:e} raised to non-integer t={t}; using |λ|^t");
                warned = true;
            }
            lambda.abs().powf(t)
        };
        out.column_mut(col).assign(&(&s.psi.column(l) * scale));
    }
    Ok(out)
}

/// `L_p(i,j) = Σ_w (p[i][w] − p[j][w])² / π[w]`.
pub fn diffusion_distance_direct(p: &StochasticKernel, i: usize, j: usize) -> Result<f64> {
    let n = p.n();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("index out of range: ({i}, {j}) for n = {n}")));
    }
    Ok(direct_entry(p.matrix().as_array(), p.pi(), i, j))
}

fn direct_entry(pm: &Array2<f64>, pi: &Array1<f64>, i: usize, j: usize) -> f64 {
    if i == j {
        return 0.0;
    }
    let (ri, rj) = (pm.row(i), pm.row(j));
    let mut acc = 0.0;
    for w in 0..pi.len() {
        let diff = ri[w] - rj[w];
        acc += diff * diff / pi[w];
    }
    acc
}

/// Full matrix of [`diffusion_distance_direct`].
pub fn diffusion_distance_matrix(p: &StochasticKernel) -> SquareMatrix {
    let n = p.n();
    let pm = p.matrix().as_array();
    let pi = p.pi();
    let mut out = Array2::zeros((n, n));
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        // evaluate each unordered pair in one orientation so L is exactly symmetric
        *v = if i <= j { direct_entry(pm, pi, i, j) } else { direct_entry(pm, pi, j, i) };
    });
    SquareMatrix::from_array_unchecked(out)
}

/// `L_{p,M}(i,j) = Σ_{l≤M} λ_l² (ψ_l(i) − ψ_l(j))²`.
pub fn diffusion_distance_truncated(s: &SpectralDecomposition, m: usize) -> Result<SquareMatrix> {
    let n = s.n();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("truncation must lie in [1, {n}], got {m}")));
    }
    let mut coords = Array2::zeros((n, m));
    for l in 0..m {
        coords.column_mut(l).assign(&(&s.psi.column(l) * s.eigenvalues[l]));
    }
    let mut out = Array2::zeros((n, n));
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        if i != j {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            *v = coords
                .row(a)
                .iter()
                .zip(coords.row(b).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    });
    Ok(SquareMatrix::from_array_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::row_normalize;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn kernel(rows: &[&[f64]]) -> StochasticKernel {
        let k = SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        row_normalize(&k).unwrap()
    }

    #[test]
    fn uniform_kernel_is_rank_one() {
        let p = row_normalize(&SquareMatrix::from_fn(4, |_| 1.0).unwrap()).unwrap();
        let s = decompose(&p).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-12);
        for l in 1..4 {
            assert_abs_diff_eq!(s.eigenvalues[l], 0.0, epsilon = 1e-12);
        }
        assert!(s.psi.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_state_chain() {
        let p = kernel(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let s = decompose(&p).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], 0.8, epsilon = 1e-12);
        // canonical sign puts the first entry positive on a tie
        assert_abs_diff_eq!(s.psi[[0, 1]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.psi[[1, 1]], -1.0, epsilon = 1e-12);

        let x = diffusion_coordinates(&s, 1.0, 2, false).unwrap();
        assert_abs_diff_eq!(x[[0, 1]], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(x[[1, 1]], -0.8, epsilon = 1e-12);
    }

    #[test]
    fn block_diagonal_has_one_unit_eigenvalue_per_block() {
        let n = 9;
        let k = SquareMatrix::from_fn(n, |(i, j)| if i / 3 == j / 3 { 1.0 } else { 1e-14 }).unwrap();
        let s = decompose(&row_normalize(&k).unwrap()).unwrap();
        let unit = s.eigenvalues.iter().filter(|&&l| (l - 1.0).abs() < 1e-8).count();
        assert_eq!(unit, 3);
        assert!(s.psi.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn reconstruction_and_biorthogonality() {
        let p = kernel(&[&[3.0, 1.0, 0.5], &[1.0, 2.0, 0.2], &[0.5, 0.2, 4.0]]);
        let s = decompose(&p).unwrap();
        let r = s.reconstruct();
        for (a, b) in r.iter().zip(p.matrix().as_array().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert!(s.bi_orthogonality_error() < 1e-12);
        assert_abs_diff_eq!(s.spectral_sum(), p.matrix().trace(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_irreversible_kernels() {
        let p = kernel(&[&[1., 2., 3.], &[1., 1., 1.], &[5., 1., 2.]]);
        assert!(matches!(decompose(&p), Err(Error::NotConjugateSymmetric { .. })));
    }

    #[test]
    fn coordinates_edge_cases() {
        let p = kernel(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let s = decompose(&p).unwrap();
        let x0 = diffusion_coordinates(&s, 0.0, 2, false).unwrap();
        assert_eq!(x0, s.psi);
        let far = diffusion_coordinates(&s, 400.0, 2, true).unwrap();
        assert!(far.iter().all(|v| v.abs() < 1e-30));
        assert_eq!(diffusion_coordinates(&s, 1.0, 2, true).unwrap().ncols(), 1);
        assert!(diffusion_coordinates(&s, 1.0, 3, false).is_err());
        assert!(diffusion_coordinates(&s, -1.0, 1, false).is_err());
    }

    #[test]
    fn rescaling_recovers_psi() {
        let p = kernel(&[&[3.0, 1.0, 0.5], &[1.0, 2.0, 0.2], &[0.5, 0.2, 4.0]]);
        let s = decompose(&p).unwrap();
        let psi2 = s.psi.column(1).to_owned();
        let unit = &psi2 / psi2.dot(&psi2).sqrt() * -1.0;
        let back = psi_from_right_eigenvector(&unit, &s.pi).unwrap();
        for (a, b) in back.iter().zip(psi2.iter()) {
            assert_abs_diff_eq!(a.abs(), b.abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn direct_distance_examples() {
        let p = kernel(&[&[0.75, 0.25], &[0.25, 0.75]]);
        assert_eq!(diffusion_distance_direct(&p, 0, 0).unwrap(), 0.0);
        assert_abs_diff_eq!(diffusion_distance_direct(&p, 0, 1).unwrap(), 1.0, epsilon = 1e-15);
        assert!(diffusion_distance_direct(&p, 0, 2).is_err());

        let same = kernel(&[&[1., 2., 3.], &[1., 2., 3.], &[3., 3., 3.]]);
        assert_eq!(diffusion_distance_direct(&same, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn truncated_distance_examples() {
        let p = kernel(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let s = decompose(&p).unwrap();
        let l1 = diffusion_distance_truncated(&s, 1).unwrap();
        assert!(l1.as_array().iter().all(|&v| v == 0.0));
        let l2 = diffusion_distance_truncated(&s, 2).unwrap();
        assert_abs_diff_eq!(l2[(0, 1)], 1.0, epsilon = 1e-12);
        let direct = diffusion_distance_matrix(&p);
        assert_eq!(direct.as_array(), &array![[0.0, 1.0], [1.0, 0.0]]);
    }
}
