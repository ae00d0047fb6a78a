//! Training and analysis toolkit for unstructured recursive networks.
//!
//! A single dense `S x S` weight matrix plus bias is applied recursively `I`
//! times to a neuron vector; the input is embedded into the first slots, the
//! output read from the last. Training with cross-entropy plus L1 weight,
//! L1 activity, and synaptic-length regularizers drives most of the network
//! silent, and the surviving neurons organize into interpretable structure
//! (layers, local connectivity) that this crate extracts, verifies, and
//! exports.
//!
//! Module map:
//! - [`math`]: dense linear algebra, seeded RNG, Adam.
//! - [`model`]: the recursive network and its three update-rule variants.
//! - [`geometry`]: neuron coordinates and the uplift metric.
//! - [`loss`]: the regularized loss and exact reverse-mode gradients.
//! - [`data`]: dataset generators and CIFAR-10 ingestion.
//! - [`analysis`]: pruning, layer inference, masking, verification.
//! - [`embedding`]: the MLP-in-recursive-matrix reference construction.
//! - [`train`], [`config`], [`snapshot`], [`connectome`], [`gradcheck`]:
//!   experiment orchestration and artifacts.

pub mod analysis;
pub mod config;
pub mod connectome;
pub mod data;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod loss;
pub mod math;
pub mod model;
pub mod snapshot;
pub mod train;

pub use error::{Result, UrnError};
