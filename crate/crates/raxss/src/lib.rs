// SPDX-License-Identifier: Apache-2.0

//! File formats, synthetic data, and end-to-end runs on top of `raxss-core`.
//!
//! * [`io`]: manifest-driven dataset directories
//! * [`checkpoint`]: backbone checkpoints as JSON
//! * [`config`]: the run configuration shared by every CLI command
//! * [`synth`]: variable-length series with a rare injected motif
//! * [`pipeline`]: preprocessing, training, evaluation, and explanation runs

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use raxss_core as core;
