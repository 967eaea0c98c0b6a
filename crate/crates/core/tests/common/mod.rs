//! Fixtures and brute-force reference implementations shared by the
//! integration tests. The references deliberately avoid the library's own
//! helpers so that agreement is meaningful.

#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use ortho_core::cluster_eval::Labeling;
use ortho_core::kernel::{row_normalize, StochasticKernel};
use ortho_core::orthogonalize::symmetric_sinkhorn;
use ortho_core::SquareMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric affinity with i.i.d. entries in `[0.05, 1.05)`.
pub fn random_symmetric_affinity(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = 0.05 + rng.random::<f64>();
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    SquareMatrix::new(a).unwrap()
}

/// Non-symmetric positive affinity.
pub fn random_affinity(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    SquareMatrix::new(Array2::from_shape_fn((n, n), |_| 0.05 + rng.random::<f64>())).unwrap()
}

/// Row-normalized random kernel; symmetric numerator when `symmetric`.
pub fn random_kernel(n: usize, rng: &mut ChaCha8Rng, symmetric: bool) -> StochasticKernel {
    let a = if symmetric { random_symmetric_affinity(n, rng) } else { random_affinity(n, rng) };
    row_normalize(&a).unwrap()
}

pub fn random_doubly_stochastic(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    symmetric_sinkhorn(&random_symmetric_affinity(n, rng), 1e-13, 100_000).unwrap()
}

pub fn random_raw_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// `Σ_w (p[i][w] − p[j][w])² / π[w]` by explicit loops.
pub fn diffusion_distance_oracle(p: &Array2<f64>, pi: &[f64]) -> Array2<f64> {
    let n = p.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for w in 0..n {
                let d = p[[i, w]] - p[[j, w]];
                s += d * d / pi[w];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// ARI from the four pair counts obtained by enumerating all pairs.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut ss, mut sd, mut ds, mut dd) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1,
                (true, false) => sd += 1,
                (false, true) => ds += 1,
                (false, false) => dd += 1,
            }
        }
    }
    let (ss, sd, ds, dd) = (ss as f64, sd as f64, ds as f64, dd as f64);
    let den = (dd + sd) * (sd + ss) + (dd + ds) * (ds + ss);
    if den == 0.0 {
        return if same_partition(a, b) { 1.0 } else { 0.0 };
    }
    2.0 * (dd * ss - sd * ds) / den
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// NMI straight from the empirical joint and marginal distributions.
pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let h = |m: &HashMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    if pa.len() == 1 && pb.len() == 1 {
        return 1.0;
    }
    if pa.len() == 1 || pb.len() == 1 {
        return 0.0;
    }
    mi / (ha * hb).sqrt()
}

pub fn purity_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let mut best = 0usize;
    let mut clusters: Vec<usize> = pred.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    for c in clusters {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for (&p, &t) in pred.iter().zip(truth) {
            if p == c {
                *counts.entry(t).or_default() += 1;
            }
        }
        best += counts.values().max().copied().unwrap_or(0);
    }
    best as f64 / pred.len() as f64
}

pub fn labeling(raw: &[usize]) -> Labeling {
    Labeling::from_raw(raw)
}

/// Largest elementwise difference.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Doubly stochastic functional written as three separate sums.
pub fn ds_functional_oracle(p: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    for x in 0..n {
        for y in 0..n {
            for w in 0..n {
                let d = p[[x, w]] - p[[y, w]];
                t1 += p[[x, y]] * d * d;
                t2 += p[[x, y]] * p[[x, y]] * p[[x, w]];
                t3 += p[[x, w]] * p[[w, y]] * p[[x, y]];
            }
        }
    }
    t1 - 2.0 * t2 + 4.0 / 3.0 * t3
}

/// Random symmetric direction with zero row and column sums and unit
/// Frobenius norm, so `p + δu` stays symmetric doubly stochastic.
pub fn ds_direction(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0);
    let a = &a + &a.t();
    let row_mean = a.sum_axis(ndarray::Axis(1)) / n as f64;
    let total_mean = a.sum() / (n * n) as f64;
    let mut u = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] - row_mean[i] - row_mean[j] + total_mean);
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u /= norm;
    u
}
