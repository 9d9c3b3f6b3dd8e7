//! Graph representation learning with second-order pooling.
//!
//! The crate provides, bottom up:
//!
//! - [`matrix`]: dense f64 matrices
//! - [`rng`]: deterministic, fork-able random streams
//! - [`autograd`]: a tape-based reverse-mode engine with Adam and a
//!   finite-difference gradient oracle
//! - [`data`]: TUDataset parsing, node feature construction, stratified
//!   k-fold splits
//! - [`layers`]: the GIN-style message-passing variants and the
//!   concatenated 5-layer stack
//! - [`pooling`]: first-order baselines, second-order pooling and its
//!   bilinear / attentional / multi-head variants, the covariance and
//!   softmax-attention comparators, and hierarchical adjacency updates
//! - [`trainer`]: flat and hierarchical model assembly, block-diagonal
//!   batching, the 10-fold cross-validation loop, and results persistence
//! - [`distinguish`]: collision search demonstrating which poolings can
//!   tell multisets of node representations apart
//! - [`cli`]: the `sopool` command-line entry points

#![allow(clippy::needless_range_loop)]

pub mod autograd;
pub mod cli;
pub mod data;
pub mod distinguish;
pub mod error;
pub mod layers;
pub mod matrix;
pub mod pooling;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
