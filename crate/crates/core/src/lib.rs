// SPDX-License-Identifier: Apache-2.0

//! Retrieval-weighted sparse sampling for variable-length time-series
//! classification.
//!
//! A series is cut into fixed-length windows. A backbone scores each window,
//! every window is assigned a support score from its most similar windows in
//! the same series, and the supports are turned into softmax weights that mix
//! the window posteriors into one series posterior. Because the mix is convex,
//! each window's share of the final probability is an additive attribution
//! that can be traced back to its neighbor leaderboard.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`dataset`] | channels, z-scoring, balancing, splits, windowing |
//! | [`backbone`] | window classifier trait and the patch-pooling MLP |
//! | [`retrieval`] | Pearson / cosine similarity and exact top-m neighbors |
//! | [`aggregation`] | temperatured softmax weights and convex mixing |
//! | [`training`] | window pool sampling, BCE, schedule, AdamW, epochs, fit |
//! | [`metrics`] | F1, Mann-Whitney AUC, accuracy |
//! | [`explain`] | attributions, leaderboards, heatmaps, monotonicity checks |
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the CLI live
//! in the `raxss` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aggregation;
pub mod backbone;
pub mod dataset;
mod error;
pub mod explain;
pub mod metrics;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};

/// Number of classes produced by every backbone.
pub const NUM_CLASSES: usize = 2;
