//! Orthogonalization fixed-point iteration.
//!
//! Given a prior kernel `q` with (symmetric) affinity numerator `q_num`, the
//! row-stochastic step is
//!
//! ```text
//! f(p)(x,y) = q_num(x,y)·exp(−c2·L_p(x,y)) / D_p(x)
//! ```
//!
//! where `L_p` is the diffusion distance of `p` and `D_p` normalizes rows. The
//! doubly stochastic variant replaces `D_p(x)` by a symmetric Sinkhorn scaling
//! `D(x)D(y)`. Iterating `p_{n+1} = f(p_n)` from `p_0 = q` sharpens cluster
//! structure: transition mass between points that are far apart in diffusion
//! distance is suppressed at every step. `L_p` can be evaluated exactly or
//! from the leading `M` eigenpairs of `p`.

mod cost;
mod sinkhorn;

pub use cost::{ds_functional, misalignment_cost, misalignment_matrix, ortho_functional, sqrt_pi_scaled};
pub use sinkhorn::{max_sum_deviation, symmetric_sinkhorn};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::{row_normalize, StochasticKernel};
use crate::matrix::SquareMatrix;
use crate::spectral::{decompose, diffusion_distance_matrix, diffusion_distance_truncated};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C2Mode {
    /// `c2` is used as given.
    Absolute,
    /// `c2` is divided by the median positive diffusion distance of `p_0`.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RowStochastic,
    DoublyStochastic,
}

/// How diffusion distances are evaluated inside the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Direct `Σ_w (p(x,w) − p(y,w))²/π(w)`.
    Full,
    /// Leading `M` eigenpairs of the current iterate.
    Leading(usize),
}

impl Serialize for Truncation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Truncation::Full => s.serialize_str("full"),
            Truncation::Leading(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("truncation must be at least 1")),
            Raw::Count(m) => Ok(Truncation::Leading(m)),
            Raw::Word(w) if w == "full" => Ok(Truncation::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"full\" or a count, got {w:?}"))),
        }
    }
}

impl std::str::FromStr for Truncation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "full" {
            return Ok(Truncation::Full);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected \"full\" or a positive count, got {s:?}")),
            Ok(m) => Ok(Truncation::Leading(m)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthoConfig {
    pub c2: f64,
    pub c2_mode: C2Mode,
    pub variant: Variant,
    pub truncation: Truncation,
    /// Sup-norm threshold on `‖p_{n+1} − p_n‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    /// Lower clamp on the exponent `−c2·L`.
    pub exponent_floor: f64,
    /// Halve-and-restart budget on underflow or divergence.
    pub max_restarts: usize,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
}

impl Default for OrthoConfig {
    fn default() -> Self {
        OrthoConfig {
            c2: 1.0,
            c2_mode: C2Mode::Relative,
            variant: Variant::RowStochastic,
            truncation: Truncation::Full,
            tol: 1e-8,
            max_iter: 200,
            sinkhorn_tol: 1e-10,
            sinkhorn_max_iter: 10_000,
            exponent_floor: -700.0,
            max_restarts: 6,
            divergence_window: 5,
        }
    }
}

impl OrthoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::invalid(format!("c2 must be finite and >= 0, got {}", self.c2)));
        }
        for (name, v) in [("tol", self.tol), ("sinkhorn_tol", self.sinkhorn_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 || self.sinkhorn_max_iter == 0 || self.divergence_window == 0 {
            return Err(Error::invalid("iteration caps and divergence window must be positive"));
        }
        if !(self.exponent_floor < 0.0) {
            return Err(Error::invalid("exponent_floor must be negative"));
        }
        if self.truncation == Truncation::Leading(0) {
            return Err(Error::invalid("truncation must be at least 1"));
        }
        Ok(())
    }

    /// Copy of this configuration with `c2` fixed to an absolute value.
    pub fn with_absolute_c2(&self, c2: f64) -> Self {
        OrthoConfig {
            c2,
            c2_mode: C2Mode::Absolute,
            ..self.clone()
        }
    }

    fn check_size(&self, n: usize) -> Result<()> {
        if let Truncation::Leading(m) = self.truncation {
            if m > n {
                return Err(Error::invalid(format!("truncation {m} exceeds the number of points {n}")));
            }
        }
        Ok(())
    }
}

/// Per-iteration diagnostics of a fixed-point run.
///
/// Rows span every attempt; `attempts[k]` says which attempt row `k` belongs
/// to, so rows after a restart start again from `p_0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OrthoTrace {
    pub residuals: Vec<f64>,
    /// `O_{p_n}(p_{n+1})`, evaluated with the distances used by the step.
    pub functional_values: Vec<f64>,
    /// `Σ_l λ_l(p_{n+1})`, i.e. the trace of the iterate.
    pub spectral_sums: Vec<f64>,
    pub attempts: Vec<usize>,
    pub restarts: Vec<RestartEvent>,
    pub converged: bool,
    /// Steps taken in the final attempt.
    pub iterations: usize,
}

impl OrthoTrace {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// Residuals of the final attempt only.
    pub fn final_residuals(&self) -> &[f64] {
        &self.residuals[self.residuals.len() - self.iterations..]
    }

    fn push(&mut self, attempt: usize, residual: f64, functional: f64, spectral_sum: f64) {
        self.residuals.push(residual);
        self.functional_values.push(functional);
        self.spectral_sums.push(spectral_sum);
        self.attempts.push(attempt);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartReason {
    RowUnderflow,
    Divergence,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartEvent {
    /// Number of trace rows recorded before the restart.
    pub at_row: usize,
    pub reason: RestartReason,
    pub c2_before: f64,
    pub c2_after: f64,
}

/// Result of [`ortho_fixpoint`].
#[derive(Debug, Clone)]
pub struct OrthoOutcome {
    /// Last iterate. For the doubly stochastic variant this is the symmetric
    /// doubly stochastic matrix wrapped with its (uniform) stationary distribution.
    pub kernel: StochasticKernel,
    pub p0: StochasticKernel,
    pub trace: OrthoTrace,
    /// The `c2` actually used by the final attempt.
    pub effective_c2: f64,
}

impl OrthoOutcome {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    /// Configuration that reproduces the final attempt's step exactly.
    pub fn resolved_config(&self, cfg: &OrthoConfig) -> OrthoConfig {
        cfg.with_absolute_c2(self.effective_c2)
    }
}

/// Default starting kernel: `q` itself (row variant) or the Sinkhorn
/// scaling of its numerator (doubly stochastic variant).
pub fn initial_kernel(q: &StochasticKernel, cfg: &OrthoConfig) -> Result<StochasticKernel> {
    match cfg.variant {
        Variant::RowStochastic => Ok(q.clone()),
        Variant::DoublyStochastic => {
            let num = ds_numerator(q)?;
            StochasticKernel::from_doubly_stochastic(symmetric_sinkhorn(num, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)?)
        }
    }
}

fn ds_numerator(q: &StochasticKernel) -> Result<&SquareMatrix> {
    q.symmetric_numerator()
        .ok_or_else(|| Error::invalid("the doubly stochastic variant needs a symmetric prior numerator"))
}

/// Diffusion distances of `p` according to the configured truncation.
pub fn step_distances(p: &StochasticKernel, truncation: Truncation) -> Result<SquareMatrix> {
    match truncation {
        Truncation::Full => Ok(diffusion_distance_matrix(p)),
        Truncation::Leading(m) => diffusion_distance_truncated(&decompose(p)?, m),
    }
}

/// Effective `c2` for `q` under `cfg`, resolved against the default `p_0`.
pub fn resolve_c2(q: &StochasticKernel, cfg: &OrthoConfig) -> Result<f64> {
    cfg.validate()?;
    cfg.check_size(q.n())?;
    resolve_against(&initial_kernel(q, cfg)?, cfg)
}

fn resolve_against(p0: &StochasticKernel, cfg: &OrthoConfig) -> Result<f64> {
    match cfg.c2_mode {
        C2Mode::Absolute => Ok(cfg.c2),
        C2Mode::Relative => {
            let l = step_distances(p0, cfg.truncation)?;
            Ok(match median_positive_off_diagonal(&l) {
                Some(med) => cfg.c2 / med,
                // all rows identical: the exponent vanishes whatever c2 is
                None => cfg.c2,
            })
        }
    }
}

fn median_positive_off_diagonal(l: &SquareMatrix) -> Option<f64> {
    let a = l.as_array();
    let n = l.n();
    let mut vals: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| a[[i, j]])
        .filter(|&v| v > 0.0)
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    Some(if m % 2 == 1 { vals[m / 2] } else { 0.5 * (vals[m / 2 - 1] + vals[m / 2]) })
}

/// `N[i][j] = q_num[i][j]·exp(max(−c2·L[i][j], floor))`.
fn reweighted_numerator(q_num: &SquareMatrix, l: &SquareMatrix, c2: f64, floor: f64) -> Result<SquareMatrix> {
    let n = q_num.n();
    let (qa, la) = (q_num.as_array(), l.as_array());
    let mut out = qa.clone();
    for i in 0..n {
        let mut all_floored = true;
        for j in 0..n {
            let e = -c2 * la[[i, j]];
            all_floored &= e < floor;
            out[[i, j]] = qa[[i, j]] * e.max(floor).exp();
        }
        if all_floored {
            return Err(Error::RowUnderflow { row: i });
        }
    }
    SquareMatrix::new(out)
}

struct Step {
    next: StochasticKernel,
    distances: SquareMatrix,
}

fn apply_step(q: &StochasticKernel, p: &StochasticKernel, c2: f64, cfg: &OrthoConfig) -> Result<Step> {
    if q.n() != p.n() {
        return Err(Error::DimensionMismatch { expected: q.n(), got: p.n() });
    }
    let distances = step_distances(p, cfg.truncation)?;
    let next = match cfg.variant {
        Variant::RowStochastic => {
            let num = reweighted_numerator(q.numerator(), &distances, c2, cfg.exponent_floor)?;
            row_normalize(&num)?
        }
        Variant::DoublyStochastic => {
            let num = reweighted_numerator(ds_numerator(q)?, &distances, c2, cfg.exponent_floor)?;
            StochasticKernel::from_doubly_stochastic(symmetric_sinkhorn(&num, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)?)?
        }
    };
    Ok(Step { next, distances })
}

/// One row-stochastic step `f(p)`.
///
/// The weight is the raw numerator of `q`; with a symmetric numerator the
/// result is again a reversible kernel with closed-form π. In relative mode
/// `c2` is resolved against `q` itself.
pub fn ortho_step(q: &StochasticKernel, p: &StochasticKernel, cfg: &OrthoConfig) -> Result<StochasticKernel> {
    let cfg = OrthoConfig { variant: Variant::RowStochastic, ..cfg.clone() };
    let c2 = resolve_c2(q, &cfg)?;
    Ok(apply_step(q, p, c2, &cfg)?.next)
}

/// One doubly stochastic step: symmetric Sinkhorn scaling of
/// `q_num·exp(−c2·L_p)`.
pub fn ortho_step_ds(q: &StochasticKernel, p: &SquareMatrix, cfg: &OrthoConfig) -> Result<SquareMatrix> {
    let cfg = OrthoConfig { variant: Variant::DoublyStochastic, ..cfg.clone() };
    let c2 = resolve_c2(q, &cfg)?;
    let p = StochasticKernel::from_doubly_stochastic(p.clone())?;
    Ok(apply_step(q, &p, c2, &cfg)?.next.matrix().clone())
}

/// `‖f(p) − p‖∞` for the configured variant.
pub fn fixpoint_residual(q: &StochasticKernel, p: &StochasticKernel, cfg: &OrthoConfig) -> Result<f64> {
    let c2 = resolve_c2(q, cfg)?;
    let step = apply_step(q, p, c2, cfg)?;
    Ok(step.next.matrix().sup_distance(p.matrix()))
}

/// Iterates `p_{n+1} = f(p_n)` until `‖p_{n+1} − p_n‖∞ < tol` or `max_iter`.
///
/// `p0` defaults to [`initial_kernel`]. In relative mode the effective `c2`
/// is resolved once from `p0`. A row underflow, a non-finite residual, or a
/// residual that grows `divergence_window` times in a row halves `c2` and
/// restarts from `p0`; once `max_restarts` restarts are spent the run fails
/// with [`Error::ConvergenceFailure`] carrying the trace. Reaching `max_iter`
/// is not an error: the outcome reports `converged == false`.
pub fn ortho_fixpoint(q: &StochasticKernel, cfg: &OrthoConfig, p0: Option<&StochasticKernel>) -> Result<OrthoOutcome> {
    ortho_fixpoint_observed(q, cfg, p0, |_, _| Ok(()))
}

/// Position of an accepted iterate within a fixed-point run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterateInfo {
    /// Restart attempt, starting at 0.
    pub attempt: usize,
    /// Step within the attempt, starting at 1.
    pub step: usize,
    /// Row of the trace recorded for this iterate, starting at 1.
    pub row: usize,
}

/// [`ortho_fixpoint`] that hands every finite iterate to `observe`, e.g. to
/// dump kernel snapshots. An error from `observe` aborts the run.
pub fn ortho_fixpoint_observed(
    q: &StochasticKernel,
    cfg: &OrthoConfig,
    p0: Option<&StochasticKernel>,
    mut observe: impl FnMut(IterateInfo, &StochasticKernel) -> Result<()>,
) -> Result<OrthoOutcome> {
    cfg.validate()?;
    cfg.check_size(q.n())?;
    let p0 = match p0 {
        Some(p) if p.n() != q.n() => return Err(Error::DimensionMismatch { expected: q.n(), got: p.n() }),
        Some(p) => p.clone(),
        None => initial_kernel(q, cfg)?,
    };
    let mut c2 = resolve_against(&p0, cfg)?;
    let mut trace = OrthoTrace::default();

    for attempt in 0..=cfg.max_restarts {
        let mut p = p0.clone();
        let mut prev = f64::INFINITY;
        let mut growth = 0;
        let mut steps = 0;
        let reason = loop {
            if steps == cfg.max_iter {
                break None;
            }
            let step = match apply_step(q, &p, c2, cfg) {
                Ok(s) => s,
                Err(Error::RowUnderflow { .. }) => break Some(RestartReason::RowUnderflow),
                Err(e) => return Err(e),
            };
            steps += 1;
            let residual = step.next.matrix().sup_distance(p.matrix());
            let functional = cost::weighted_sum(step.next.matrix(), &step.distances);
            trace.push(attempt, residual, functional, step.next.matrix().trace());
            if !residual.is_finite() {
                break Some(RestartReason::NonFinite);
            }
            observe(IterateInfo { attempt, step: steps, row: trace.len() }, &step.next)?;
            growth = if residual > prev { growth + 1 } else { 0 };
            prev = residual;
            p = step.next;
            if residual < cfg.tol {
                trace.converged = true;
                break None;
            }
            if growth >= cfg.divergence_window {
                break Some(RestartReason::Divergence);
            }
        };
        trace.iterations = steps;
        match reason {
            None => {
                return Ok(OrthoOutcome {
                    kernel: p,
                    p0,
                    trace,
                    effective_c2: c2,
                })
            }
            Some(reason) => {
                log::warn!("fixed point attempt {attempt} failed ({reason:?}) with c2 = {c2:e}");
                if attempt == cfg.max_restarts {
                    let residual = trace.residuals.last().copied().unwrap_or(f64::NAN);
                    return Err(Error::ConvergenceFailure {
                        what: "orthogonalization fixed point",
                        iterations: trace.len(),
                        residual,
                        trace: Some(Box::new(trace)),
                    });
                }
                trace.restarts.push(RestartEvent {
                    at_row: trace.len(),
                    reason,
                    c2_before: c2,
                    c2_after: c2 / 2.0,
                });
                c2 /= 2.0;
            }
        }
    }
    unreachable!("the final attempt always returns")
}
