//! Bayesian functional connectivity inference for multi-electrode array (MEA)
//! recordings.
//!
//! The crate is organized around the inference workflow:
//!
//! - [`spikedata`]: binned binary spike trains, electrode geometry and the
//!   `MEASPIKES` text format.
//! - [`model`]: the autoregressive Bernoulli network model (activations,
//!   likelihood, generative simulation) and network CSV files.
//! - [`sampler`]: the parallel collapsed Gibbs sampler with Pólya-Gamma
//!   augmentation, counter-based RNG streams and chain serialization.
//! - [`hierarchy`]: region splitting, two-level inference and merging.
//! - [`analysis`]: posterior summaries, cosine similarity and graph metrics.
//! - [`cli`]: the `mea-netinfer` command-line workflows.
//!
//! Matrix convention used everywhere: entry `[(m, n)]` of an adjacency or
//! weight matrix is the connection from source electrode `m` to target
//! electrode `n`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod hierarchy;
pub mod model;
pub mod sampler;
pub mod spikedata;

pub use error::{Error, Result};
