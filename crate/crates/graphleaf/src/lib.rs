//! Leaf disease classification over superpixel region graphs.
//!
//! The pipeline: decode and normalize leaf images, partition each into
//! ~50 SLIC superpixels, build a region adjacency graph with mean-color
//! node features, and train GCN / GAT / hybrid GCN->GAT graph classifiers
//! on the result. The numeric stack (tensors, reverse-mode gradients,
//! Adam, He init) is built in-crate; nothing is delegated to an external
//! ML framework.

// index loops in the numeric kernels walk several buffers in lockstep
#![allow(clippy::needless_range_loop)]

pub mod autograd;
pub mod batch;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rag;
pub mod rng;
pub mod slic;
pub mod sparse;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
