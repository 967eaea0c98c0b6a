//! Seeded synthetic fixtures: block-structured affinities buried in uniform
//! noise, and Gaussian point blobs.
//!
//! All randomness comes from ChaCha8 seeded with the user seed. For
//! [`noisy_blocks`], stream 0 fills the global noise matrix and stream
//! `b + 1` fills block `b`, so blocks can be generated independently and the
//! output is identical on every platform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cluster_eval::Labeling;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Points per block.
    pub block_size: usize,
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_blocks() -> usize {
    3
}

fn default_noise() -> f64 {
    10.0
}

impl SyntheticSpec {
    pub fn new(block_size: usize, seed: u64) -> Self {
        SyntheticSpec {
            block_size,
            num_blocks: default_blocks(),
            noise_scale: default_noise(),
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.block_size * self.num_blocks
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.num_blocks == 0 {
            return Err(Error::invalid("block_size and num_blocks must be at least 1"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid(format!("noise_scale must be finite and >= 0, got {}", self.noise_scale)));
        }
        Ok(())
    }

    /// Block id of every index.
    pub fn truth(&self) -> Labeling {
        Labeling::from_raw(&(0..self.n()).map(|i| i / self.block_size).collect::<Vec<_>>())
    }
}

/// Symmetric `n×n` matrix of i.i.d. Uniform[0,1) draws (upper triangle,
/// diagonal included, filled row by row and mirrored).
fn symmetric_uniform(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.random();
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    s
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `noise_scale·S + blockdiag(S_1, …, S_b)` with ground-truth block labels.
///
/// Entries may be exactly zero off the blocks; kernel construction floors
/// them before normalization.
pub fn noisy_blocks(spec: &SyntheticSpec) -> Result<(SquareMatrix, Labeling)> {
    spec.validate()?;
    let n = spec.n();
    let mut q = symmetric_uniform(n, &mut stream(spec.seed, 0));
    q.mapv_inplace(|v| spec.noise_scale * v);
    for b in 0..spec.num_blocks {
        let s = symmetric_uniform(spec.block_size, &mut stream(spec.seed, b as u64 + 1));
        let lo = b * spec.block_size;
        let hi = lo + spec.block_size;
        let mut view = q.slice_mut(ndarray::s![lo..hi, lo..hi]);
        view += &s;
    }
    Ok((SquareMatrix::new(q)?, spec.truth()))
}

/// `n_per` isotropic Gaussian draws around each center, center by center.
pub fn gaussian_blobs(
    n_per: usize,
    dim: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<(Array2<f64>, Labeling)> {
    if n_per == 0 || dim == 0 || centers.is_empty() {
        return Err(Error::invalid("gaussian_blobs needs n_per, dim and centers to be nonempty"));
    }
    if let Some(c) = centers.iter().find(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::invalid(format!("invalid sigma {sigma}: {e}")))?;
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per * centers.len();
    let mut points = Array2::zeros((n, dim));
    for (c, center) in centers.iter().enumerate() {
        for r in 0..n_per {
            for (d, &mu) in center.iter().enumerate() {
                points[[c * n_per + r, d]] = mu + normal.sample(&mut rng);
            }
        }
    }
    let truth = Labeling::from_raw(&(0..n).map(|i| i / n_per).collect::<Vec<_>>());
    Ok((points, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster_eval::{ari, kmeans};
    use crate::kernel::{kernel_from_affinity, pairwise_sq_distances};
    use crate::spectral::decompose;

    #[test]
    fn noisy_blocks_shape_symmetry_and_ranges() {
        let spec = SyntheticSpec::new(7, 11);
        let (q, truth) = noisy_blocks(&spec).unwrap();
        assert_eq!(q.n(), 21);
        assert_eq!(q.max_asymmetry(), 0.0);
        for i in 0..21 {
            for j in 0..21 {
                let v = q[(i, j)];
                let hi = if i / 7 == j / 7 { 11.0 } else { 10.0 };
                assert!((0.0..=hi).contains(&v), "q[{i},{j}] = {v}");
            }
        }
        assert_eq!(truth.cluster_sizes(), vec![7, 7, 7]);
    }

    #[test]
    fn noisy_blocks_is_seeded() {
        let a = noisy_blocks(&SyntheticSpec::new(5, 1)).unwrap().0;
        let b = noisy_blocks(&SyntheticSpec::new(5, 1)).unwrap().0;
        let c = noisy_blocks(&SyntheticSpec::new(5, 2)).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_blocks_give_unit_eigenvalues() {
        let spec = SyntheticSpec { noise_scale: 0.0, ..SyntheticSpec::new(4, 3) };
        let (q, _) = noisy_blocks(&spec).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                if i / 4 != j / 4 {
                    assert_eq!(q[(i, j)], 0.0);
                }
            }
        }
        let s = decompose(&kernel_from_affinity(&q, 0.0, false).unwrap()).unwrap();
        let unit = s.eigenvalues.iter().filter(|&&l| (l - 1.0).abs() < 1e-8).count();
        assert_eq!(unit, 3);
    }

    #[test]
    fn blobs_examples() {
        let centers = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let (pts, truth) = gaussian_blobs(3, 2, &centers, 0.0, 5).unwrap();
        let d = pairwise_sq_distances(&pts).unwrap();
        assert_eq!(d[(0, 3)], 25.0);
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(truth.k(), 2);

        let (_, one) = gaussian_blobs(4, 3, &[vec![1.0, 2.0, 3.0]], 1.0, 5).unwrap();
        assert_eq!(one.k(), 1);

        let (pts, truth) = gaussian_blobs(20, 2, &[vec![0.0, 0.0], vec![100.0, 0.0]], 1.0, 9).unwrap();
        let pred = kmeans(&pts, 2, 0, 5).unwrap();
        assert_eq!(ari(&pred, &truth).unwrap(), 1.0);
    }
}
