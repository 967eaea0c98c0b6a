//! Cluster count estimation, k-means on diffusion coordinates, and external
//! clustering scores (purity, NMI, ARI).

use std::collections::HashMap;
use std::hash::Hash;

use ndarray::{Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralDecomposition;

/// A hard partition of `n` items into `k` nonempty clusters `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn from_raw<T: Eq + Hash + Copy>(raw: &[T]) -> Self {
        let mut ids = HashMap::new();
        let labels = raw
            .iter()
            .map(|v| {
                let next = ids.len();
                *ids.entry(*v).or_insert(next)
            })
            .collect();
        Labeling { labels, k: ids.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Scores of a predicted labeling against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ari: f64,
    pub nmi: f64,
    pub purity: f64,
}

/// Two cluster count estimates read off the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClusterCountEstimate {
    /// `round(Σ λ)` clamped to `[1, n]`; the primary estimate.
    pub from_trace: usize,
    /// `argmax_l (λ_l − λ_{l+1})` over the leading eigenvalues (1-based).
    pub from_gap: usize,
}

pub fn estimate_num_clusters(s: &SpectralDecomposition) -> ClusterCountEstimate {
    let n = s.n();
    let lambda = &s.eigenvalues;
    let from_trace = (lambda.sum().round().max(1.0) as usize).min(n);
    let lead = (n.saturating_sub(1)).min(50);
    let mut from_gap = 1;
    let mut best = f64::NEG_INFINITY;
    for l in 0..lead {
        let gap = lambda[l] - lambda[l + 1];
        if gap > best {
            best = gap;
            from_gap = l + 1;
        }
    }
    ClusterCountEstimate { from_trace, from_gap }
}

/// Result of a k-means fit.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labeling: Labeling,
    /// Raw assignment `0..k` before relabeling in order of first appearance.
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    pub wcss: f64,
}

const KMEANS_MAX_ITER: usize = 300;

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by
/// within-cluster sum of squares.
///
/// Restart `r` draws from the ChaCha8 stream `r` of `seed`, so the result is
/// independent of thread scheduling. Ties in WCSS go to the lowest restart.
/// Returned labels are ordered by first appearance.
pub fn kmeans(coords: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<Labeling> {
    Ok(kmeans_fit(coords, k, seed, restarts)?.labeling)
}

pub fn kmeans_fit(coords: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let (n, m) = coords.dim();
    if m == 0 || n == 0 {
        return Err(Error::invalid("k-means needs at least one point and one coordinate"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("k-means needs at least one restart"));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("coordinates must be finite"));
    }
    let fits: Vec<(Vec<usize>, Array2<f64>, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(coords, k, &mut rng)
        })
        .collect();
    let (assignment, centroids, wcss) = fits
        .into_iter()
        .reduce(|best, cur| if cur.2 < best.2 { cur } else { best })
        .expect("at least one restart");
    Ok(KMeansFit {
        labeling: Labeling::from_raw(&assignment),
        assignment,
        centroids,
        wcss,
    })
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seeds(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point coincides with a chosen centroid
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Array2<f64>, f64) {
    let n = x.nrows();
    let mut centroids = plus_plus_seeds(x, k, rng);
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(x.row(i), &centroids);
            dist[i] = d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(assignment[i]).scaled_add(1.0, &x.row(i));
            counts[assignment[i]] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / count as f64));
            } else {
                // empty cluster: move it onto the point worst served by its centroid
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centroids.row_mut(c).assign(&x.row(far));
                dist[far] = 0.0;
            }
        }
    }
    let wcss = (0..n).map(|i| sq_dist(x.row(i), centroids.row(assignment[i]))).sum();
    (assignment, centroids, wcss)
}

fn check_pair(pred: &Labeling, truth: &Labeling) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "labelings differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("labelings are empty"));
    }
    Ok(())
}

/// `counts[a][b] = |{i : pred_i = a, truth_i = b}|`.
fn contingency(pred: &Labeling, truth: &Labeling) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; truth.k()]; pred.k()];
    for (&a, &b) in pred.labels().iter().zip(truth.labels()) {
        t[a][b] += 1;
    }
    t
}

pub fn purity(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits: u64 = contingency(pred, truth)
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / pred.len() as f64)
}

fn entropy(sizes: impl Iterator<Item = u64>, n: f64) -> f64 {
    sizes
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
///
/// Two single-cluster labelings score 1; if exactly one of them is a single
/// cluster the score is 0.
pub fn nmi(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as u64;
    let nf = n as f64;
    let t = contingency(pred, truth);
    let a: Vec<u64> = t.iter().map(|r| r.iter().sum()).collect();
    let b: Vec<u64> = (0..truth.k()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let (ha, hb) = (entropy(a.iter().copied(), nf), entropy(b.iter().copied(), nf));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let ratio = (c * n) as f64 / (a[i] * b[j]) as f64;
                mi += c as f64 / nf * ratio.ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> u128 {
    let c = c as u128;
    c * c.saturating_sub(1) / 2
}

/// Adjusted Rand index from pair counts, evaluated in exact integer
/// arithmetic up to a single final division.
pub fn ari(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    check_pair(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let t = contingency(pred, truth);
    let index: u128 = t.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: u128 = t.iter().map(|r| pairs(r.iter().sum())).sum();
    let sb: u128 = (0..truth.k()).map(|j| pairs(t.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(pred.len() as u64);
    // (index − sa·sb/total) / ((sa+sb)/2 − sa·sb/total), scaled by 2·total
    let num = 2 * index as i128 * total as i128 - 2 * (sa * sb) as i128;
    let den = (sa + sb) as i128 * total as i128 - 2 * (sa * sb) as i128;
    if den == 0 {
        return Ok(if pred == truth { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

pub fn evaluate(pred: &Labeling, truth: &Labeling) -> Result<MetricReport> {
    Ok(MetricReport {
        ari: ari(pred, truth)?,
        nmi: nmi(pred, truth)?,
        purity: purity(pred, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::row_normalize;
    use crate::matrix::SquareMatrix;
    use crate::spectral::decompose;
    use ndarray::array;

    fn lab(v: &[usize]) -> Labeling {
        Labeling::from_raw(v)
    }

    #[test]
    fn from_raw_compacts_in_order_of_appearance() {
        let l = Labeling::from_raw(&[7i64, 3, 7, -1]);
        assert_eq!(l.labels(), &[0, 1, 0, 2]);
        assert_eq!(l.k(), 3);
        assert_eq!(l.cluster_sizes(), vec![2, 1, 1]);
    }

    #[test]
    fn checkerboard_scores() {
        let (p, t) = (lab(&[0, 0, 1, 1]), lab(&[0, 1, 0, 1]));
        assert_eq!(ari(&p, &t).unwrap(), -0.5);
        assert_eq!(nmi(&p, &t).unwrap(), 0.0);
        assert_eq!(purity(&p, &t).unwrap(), 0.5);
    }

    #[test]
    fn identical_labelings_score_one() {
        let p = lab(&[0, 1, 2, 1, 0, 2, 2]);
        let q = Labeling::from_raw(&[5, 9, 4, 9, 5, 4, 4]);
        assert_eq!(evaluate(&p, &q).unwrap(), MetricReport { ari: 1.0, nmi: 1.0, purity: 1.0 });
    }

    #[test]
    fn degenerate_partitions() {
        let one = lab(&[0, 0, 0, 0]);
        let singles = lab(&[0, 1, 2, 3]);
        assert_eq!(ari(&one, &one).unwrap(), 1.0);
        assert_eq!(ari(&singles, &singles).unwrap(), 1.0);
        assert_eq!(ari(&one, &singles).unwrap(), 0.0);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert_eq!(nmi(&one, &singles).unwrap(), 0.0);
    }

    #[test]
    fn purity_of_single_cluster() {
        let pred = lab(&[0; 12]);
        let truth = lab(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
        assert_eq!(purity(&pred, &truth).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (a, b) = (lab(&[0, 1]), lab(&[0, 1, 1]));
        assert!(matches!(ari(&a, &b), Err(Error::InvalidInput(_))));
        assert!(matches!(nmi(&a, &b), Err(Error::InvalidInput(_))));
        assert!(matches!(purity(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kmeans_examples() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        assert_eq!(kmeans(&x, 2, 1, 4).unwrap().labels(), &[0, 0, 1, 1]);
        assert_eq!(kmeans(&x, 1, 1, 1).unwrap().labels(), &[0, 0, 0, 0]);
        let fit = kmeans_fit(&x, 4, 3, 2).unwrap();
        assert_eq!(fit.wcss, 0.0);
        assert_eq!(fit.labeling.k(), 4);
        assert!(kmeans(&x, 5, 0, 1).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64 + 0.01 * i as f64);
        let a = kmeans_fit(&x, 4, 42, 5).unwrap();
        let b = kmeans_fit(&x, 4, 42, 5).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.wcss.to_bits(), b.wcss.to_bits());
    }

    #[test]
    fn cluster_count_examples() {
        let n = 5;
        let near_identity =
            SquareMatrix::from_fn(n, |(i, j)| if i == j { 1.0 } else { 1e-6 }).unwrap();
        let s = decompose(&row_normalize(&near_identity).unwrap()).unwrap();
        assert_eq!(estimate_num_clusters(&s).from_trace, 5);

        let uniform = SquareMatrix::from_fn(4, |_| 1.0).unwrap();
        let s = decompose(&row_normalize(&uniform).unwrap()).unwrap();
        assert_eq!(estimate_num_clusters(&s).from_trace, 1);

        let blocks = SquareMatrix::from_fn(9, |(i, j)| if i / 3 == j / 3 { 1.0 } else { 1e-300 }).unwrap();
        let s = decompose(&row_normalize(&blocks).unwrap()).unwrap();
        let est = estimate_num_clusters(&s);
        assert_eq!(est.from_trace, 3);
        assert_eq!(est.from_gap, 3);
    }
}
