// SPDX-License-Identifier: Apache-2.0

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("channel `{0}` has no samples")]
    EmptyChannel(String),
    #[error("channel `{id}`: label {label} is not 0 or 1")]
    InvalidLabel { id: String, label: i64 },
    #[error("channel `{id}`: sample {index} is not finite")]
    NonFiniteSample { id: String, index: usize },
    #[error("invalid window config: {0}")]
    InvalidWindowConfig(&'static str),
    #[error("class {0} is absent; balancing needs both classes")]
    MissingClass(u8),
    #[error("cannot split {channels} channels into {splits} non-empty splits")]
    TooFewChannels { channels: usize, splits: usize },
    #[error("split fractions must be non-negative and sum to 1 (got sum {0})")]
    InvalidFractions(f64),
    #[error("either every channel or no channel may carry a preassigned split")]
    PartialSplitAssignment,
    #[error("input length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("similarity needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("window index {index} out of range for {len} windows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("neighbor count m must be at least 1")]
    ZeroNeighbors,
    #[error("temperature must be positive and finite (got {0})")]
    InvalidTemperature(f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("aggregation needs at least one window")]
    EmptyAggregation,
    #[error("the window pool is empty")]
    EmptyPool,
    #[error("series `{0}` yields no windows")]
    NoWindows(String),
    #[error("AUC undefined: only one class present")]
    AucUndefined,
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(&'static str),
    #[error("batch {batch} of epoch {epoch}: {source}")]
    Batch {
        epoch: usize,
        batch: usize,
        source: alloc::boxed::Box<Error>,
    },
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
    #[error("parameter array `{name}` has {actual} values, expected {expected}")]
    ParamShape {
        name: String,
        expected: usize,
        actual: usize,
    },
}
