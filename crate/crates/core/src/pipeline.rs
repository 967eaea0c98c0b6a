//! End-to-end runs: load data, build the prior kernel, orthogonalize,
//! embed, cluster, score and export.
//!
//! [`run_pipeline`] writes into `output_dir`:
//!
//! | file | content |
//! |------|---------|
//! | `run_manifest.json` | resolved configuration and run status (written first, updated last) |
//! | `trace.csv` | per-iteration diagnostics |
//! | `spectrum.csv` | eigenvalues of `p0` and `p*` |
//! | `embedding.csv` | diffusion coordinates of `p*`, trivial column dropped |
//! | `labels.csv` | k-means labels |
//! | `metrics.json` | ARI/NMI/purity, only when truth labels are given |
//! | `scatter.svg` | first two embedding columns colored by label |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster_eval::{estimate_num_clusters, evaluate, kmeans, Labeling, MetricReport};
use crate::datagen::{noisy_blocks, SyntheticSpec};
use crate::error::{Error, Result};
use crate::io::{self, InputKind};
use crate::kernel::{kernel_from_affinity, kernel_from_distances, kernel_from_points, BandwidthChoice, KernelOptions, StochasticKernel};
use crate::orthogonalize::{ortho_fixpoint_observed, OrthoConfig, OrthoTrace, Truncation};
use crate::plot::scatter_svg;
use crate::spectral::{decompose, diffusion_coordinates};

pub const MANIFEST: &str = "run_manifest.json";
pub const EMBEDDING: &str = "embedding.csv";
pub const LABELS: &str = "labels.csv";
pub const SPECTRUM: &str = "spectrum.csv";
pub const TRACE: &str = "trace.csv";
pub const METRICS: &str = "metrics.json";
pub const SCATTER: &str = "scatter.svg";
/// Directory of kernel snapshots, one `attempt<a>_iter<s>.csv` per dump.
pub const SNAPSHOTS: &str = "snapshots";

/// Number of clusters: fixed, or estimated from the spectrum of `p*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for ClusterCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Auto => s.serialize_str("auto"),
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("k must be at least 1")),
            Raw::Count(k) => Ok(ClusterCount::Fixed(k)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for ClusterCount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(ClusterCount::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected \"auto\" or a positive count, got {s:?}")),
            Ok(k) => Ok(ClusterCount::Fixed(k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub kind: InputKind,
    /// Ground-truth labels; enables `metrics.json`.
    pub truth: Option<PathBuf>,
    /// Ignored for affinity input. Neighbor counts are clamped to `n − 1`.
    pub bandwidth: BandwidthChoice,
    pub alpha: f64,
    pub symmetrize: bool,
    pub ortho: OrthoConfig,
    pub k: ClusterCount,
    /// Diffusion time of the exported coordinates.
    pub t: f64,
    /// Exported coordinate columns (clamped to `n − 1`).
    pub embed_dims: usize,
    /// Coordinate columns fed to k-means; defaults to `k − 1` (at least 1).
    pub cluster_dims: Option<usize>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub output_dir: PathBuf,
    /// Dump the iterate every this many steps into [`SNAPSHOTS`].
    pub snapshot_every: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::new(),
            kind: InputKind::Points,
            truth: None,
            bandwidth: BandwidthChoice::Neighbors(200),
            alpha: 0.0,
            symmetrize: true,
            ortho: OrthoConfig::default(),
            k: ClusterCount::Auto,
            t: 1.0,
            embed_dims: 10,
            cluster_dims: None,
            seed: 0,
            kmeans_restarts: 10,
            output_dir: PathBuf::from("out"),
            snapshot_every: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::invalid("no input file given"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::invalid(format!("t must be finite and >= 0, got {}", self.t)));
        }
        if self.embed_dims == 0
            || self.kmeans_restarts == 0
            || self.cluster_dims == Some(0)
            || self.snapshot_every == Some(0)
        {
            return Err(Error::invalid(
                "embed_dims, cluster_dims, kmeans_restarts and snapshot_every must be positive",
            ));
        }
        if let BandwidthChoice::Neighbors(0) = self.bandwidth {
            return Err(Error::invalid("neighbor count must be positive"));
        }
        self.ortho.validate()
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            bandwidth: self.bandwidth,
            alpha: self.alpha,
            symmetrize: self.symmetrize,
        }
    }
}

/// Values fixed during a run, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub n: usize,
    pub effective_c2: f64,
    /// Orthogonalization settings that reproduce the final step exactly.
    pub ortho: OrthoConfig,
    pub k: usize,
    pub k_from_trace: usize,
    pub k_from_gap: usize,
    pub embed_dims: usize,
    pub cluster_dims: usize,
    pub iterations: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub config: PipelineConfig,
    pub resolved: Option<Resolved>,
    pub error: Option<String>,
}

/// Summary returned by a successful [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub converged: bool,
    pub resolved: Resolved,
    pub labels: Labeling,
    pub metrics: Option<MetricReport>,
    pub trace: OrthoTrace,
}

/// Prior kernel from an input file of the given kind.
pub fn load_kernel(path: &Path, kind: InputKind, opts: &KernelOptions) -> Result<StochasticKernel> {
    match kind {
        InputKind::Points => kernel_from_points(&io::read_points(path)?, opts),
        InputKind::Distance => kernel_from_distances(&io::read_matrix(path, kind)?, opts),
        InputKind::Affinity => kernel_from_affinity(&io::read_matrix(path, kind)?, opts.alpha, opts.symmetrize),
    }
}

fn write_manifest(cfg: &PipelineConfig, status: RunStatus, resolved: Option<&Resolved>, error: Option<&Error>) -> Result<()> {
    let m = Manifest {
        status,
        config: cfg.clone(),
        resolved: resolved.cloned(),
        error: error.map(|e| e.to_string()),
    };
    io::write_json(&cfg.output_dir.join(MANIFEST), &m)
}

/// Runs the whole pipeline. Reaching `max_iter` without convergence still
/// exports everything and reports `converged == false`; a failed fixed point
/// leaves the manifest and trace behind and returns the error.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_manifest(cfg, RunStatus::Running, None, None)?;
    let result = run_stages(cfg);
    if let Err(e) = &result {
        if let Some(t) = e.trace() {
            io::write_trace(&cfg.output_dir.join(TRACE), t)?;
        }
        write_manifest(cfg, RunStatus::Failed, None, Some(e))?;
    }
    result
}

fn run_stages(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = |name: &str| cfg.output_dir.join(name);
    let q = load_kernel(&cfg.input, cfg.kind, &cfg.kernel_options())?;
    let n = q.n();
    let truth = cfg.truth.as_deref().map(io::read_labels).transpose()?;
    if let Some(t) = &truth {
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.len() });
        }
    }
    let mut ortho = cfg.ortho.clone();
    if let Truncation::Leading(m) = ortho.truncation {
        ortho.truncation = Truncation::Leading(m.min(n));
    }

    if cfg.snapshot_every.is_some() {
        std::fs::create_dir_all(out(SNAPSHOTS))?;
    }
    let outcome = ortho_fixpoint_observed(&q, &ortho, None, |at, p| match cfg.snapshot_every {
        Some(every) if at.step % every == 0 => {
            let name = format!("attempt{}_iter{:04}.csv", at.attempt, at.step);
            io::write_matrix(&out(SNAPSHOTS).join(name), p.matrix(), InputKind::Affinity)
        }
        _ => Ok(()),
    })?;
    io::write_trace(&out(TRACE), &outcome.trace)?;
    if !outcome.converged() {
        log::warn!(
            "fixed point not reached after {} iterations (last residual {:e})",
            outcome.trace.iterations,
            outcome.trace.residuals.last().copied().unwrap_or(f64::NAN)
        );
    }

    let s0 = decompose(&outcome.p0)?;
    let s = decompose(&outcome.kernel)?;
    io::write_spectrum(&out(SPECTRUM), &s0.eigenvalues, Some(&s.eigenvalues))?;

    let estimate = estimate_num_clusters(&s);
    let k = match cfg.k {
        ClusterCount::Auto => estimate.from_trace,
        ClusterCount::Fixed(k) if k > n => return Err(Error::invalid(format!("k = {k} exceeds n = {n}"))),
        ClusterCount::Fixed(k) => k,
    };
    let max_dims = n.saturating_sub(1).max(1);
    let embed_dims = cfg.embed_dims.min(max_dims);
    let cluster_dims = cfg.cluster_dims.unwrap_or(k.saturating_sub(1)).clamp(1, max_dims);
    let width = embed_dims.max(cluster_dims);

    // n == 1 has no nontrivial coordinate; keep the constant one instead
    let coords = if n > 1 {
        diffusion_coordinates(&s, cfg.t, width + 1, true)?
    } else {
        diffusion_coordinates(&s, cfg.t, 1, false)?
    };
    let embedding = coords.slice(ndarray::s![.., ..embed_dims]).to_owned();
    io::write_numeric_csv(&out(EMBEDDING), &embedding)?;

    let features = coords.slice(ndarray::s![.., ..cluster_dims]).to_owned();
    let labels = kmeans(&features, k, cfg.seed, cfg.kmeans_restarts)?;
    io::write_labels(&out(LABELS), &labels)?;

    let metrics = truth.as_ref().map(|t| evaluate(&labels, t)).transpose()?;
    if let Some(m) = &metrics {
        io::write_json(&out(METRICS), m)?;
    }
    std::fs::write(out(SCATTER), scatter_svg(&embedding, Some(&labels))?)?;

    let resolved = Resolved {
        n,
        effective_c2: outcome.effective_c2,
        ortho: outcome.resolved_config(&ortho),
        k,
        k_from_trace: estimate.from_trace,
        k_from_gap: estimate.from_gap,
        embed_dims,
        cluster_dims,
        iterations: outcome.trace.iterations,
        restarts: outcome.trace.restarts.len(),
    };
    let status = if outcome.converged() { RunStatus::Converged } else { RunStatus::NotConverged };
    write_manifest(cfg, status, Some(&resolved), None)?;
    Ok(PipelineReport {
        converged: outcome.converged(),
        resolved,
        labels,
        metrics,
        trace: outcome.trace,
    })
}

/// Writes a noisy-block affinity matrix and its truth labels.
pub fn gen(spec: &SyntheticSpec, matrix_path: &Path, truth_path: &Path) -> Result<()> {
    let (q, truth) = noisy_blocks(spec)?;
    io::write_matrix(matrix_path, &q, InputKind::Affinity)?;
    io::write_labels(truth_path, &truth)
}

/// Decomposes the prior kernel of an input file; writes its spectrum and,
/// if requested, `dims` diffusion coordinates at time `t` (trivial column
/// dropped).
pub fn spectrum(
    input: &Path,
    kind: InputKind,
    opts: &KernelOptions,
    spectrum_path: &Path,
    coords: Option<(&Path, usize, f64)>,
) -> Result<()> {
    let q = load_kernel(input, kind, opts)?;
    let s = decompose(&q)?;
    io::write_spectrum(spectrum_path, &s.eigenvalues, None)?;
    if let Some((path, dims, t)) = coords {
        let dims = dims.min(q.n().saturating_sub(1));
        if dims == 0 {
            return Err(Error::invalid("no nontrivial coordinates to export"));
        }
        io::write_numeric_csv(path, &diffusion_coordinates(&s, t, dims + 1, true)?)?;
    }
    Ok(())
}

/// Scores a predicted label file against a truth label file.
pub fn eval(pred: &Path, truth: &Path, out: Option<&Path>) -> Result<MetricReport> {
    let report = evaluate(&io::read_labels(pred)?, &io::read_labels(truth)?)?;
    if let Some(path) = out {
        io::write_json(path, &report)?;
    }
    Ok(report)
}

/// Renders an embedding CSV (optionally colored by a label file) as SVG.
pub fn plot(embedding: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let coords = io::read_numeric_csv(embedding)?;
    let labels = labels.map(io::read_labels).transpose()?;
    let svg = scatter_svg(&coords, labels.as_ref())?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, svg)?;
    Ok(())
}
