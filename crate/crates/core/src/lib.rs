//! Diffusion-map kernels with an orthogonalizing fixed-point refinement.
//!
//! The crate builds Markov kernels from point clouds or distance matrices,
//! decomposes them spectrally, and refines them by iterating a map that
//! suppresses transitions between points whose diffusion profiles disagree.
//! The refined kernel yields sharper diffusion coordinates for clustering.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster_eval;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod matrix;
pub mod orthogonalize;
pub mod pipeline;
pub mod plot;
pub mod spectral;

pub use error::{Error, Result};
pub use kernel::{StochasticKernel, KernelOptions, BandwidthChoice};
pub use matrix::SquareMatrix;
pub use orthogonalize::{ortho_fixpoint, OrthoConfig, OrthoOutcome, OrthoTrace};
pub use spectral::{decompose, SpectralDecomposition};
