// SPDX-License-Identifier: Apache-2.0

//! Labeled univariate channels and the preprocessing protocol applied to them:
//! per-channel z-scoring, label-stratified whole-channel splits, majority-class
//! downsampling inside train and validation, and sliding-window extraction.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::UnknownName {
                kind: "split",
                value: s.into(),
            }),
        }
    }
}

/// One labeled univariate recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    id: String,
    values: Vec<f64>,
    label: u8,
    split: Option<Split>,
    sampling_rate_hz: Option<f64>,
}

impl Channel {
    /// Validates that the channel is non-empty, all samples are finite and the
    /// label is binary.
    pub fn new(id: impl Into<String>, values: Vec<f64>, label: i64) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::EmptyChannel(id));
        }
        if label != 0 && label != 1 {
            return Err(Error::InvalidLabel { id, label });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { id, index });
        }
        Ok(Self {
            id,
            values,
            label: label as u8,
            split: None,
            sampling_rate_hz: None,
        })
    }

    pub fn with_split(mut self, split: Option<Split>) -> Self {
        self.split = split;
        self
    }

    pub fn with_sampling_rate(mut self, hz: Option<f64>) -> Self {
        self.sampling_rate_hz = hz;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn sampling_rate_hz(&self) -> Option<f64> {
        self.sampling_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_length: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_length: 1024,
            stride: 5,
        }
    }
}

impl WindowConfig {
    pub fn new(window_length: usize, stride: usize) -> Result<Self> {
        let config = Self {
            window_length,
            stride,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::InvalidWindowConfig("window_length must be >= 1"));
        }
        if self.stride == 0 {
            return Err(Error::InvalidWindowConfig("stride must be >= 1"));
        }
        Ok(())
    }

    /// `floor((T - L) / stride) + 1` for `T >= L`, otherwise zero.
    pub fn window_count(&self, series_length: usize) -> usize {
        if series_length < self.window_length {
            0
        } else {
            (series_length - self.window_length) / self.stride + 1
        }
    }
}

/// A fixed-length view into a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub channel_id: &'a str,
    pub window_index: usize,
    pub start: usize,
    pub values: &'a [f64],
}

impl Window<'_> {
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }
}

/// Replaces each sample by `(x - mean) / std` with the population standard
/// deviation. A constant channel maps to all zeros.
pub fn zscore_normalize(channel: &Channel) -> Channel {
    let values = channel.values();
    let first = values[0];
    let normalized = if values.iter().all(|&v| v == first) {
        alloc::vec![0.0; values.len()]
    } else {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        let mut out: Vec<f64> = values.iter().map(|v| (v - mean) / std).collect();
        // A second centering pass removes the residual mean left by rounding in
        // the first pass so that the moment checks hold far below 1e-9.
        let resid = out.iter().sum::<f64>() / n;
        for v in &mut out {
            *v -= resid;
        }
        out
    };
    Channel {
        values: normalized,
        ..channel.clone()
    }
}

/// Downsamples the majority class uniformly at random (seeded) until both
/// classes have the minority count. Input order is preserved among survivors.
pub fn balance_classes(channels: &[Channel], seed: u64) -> Result<Vec<Channel>> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..channels.len()).partition(|&i| channels[i].label == 1);
    if pos.is_empty() {
        return Err(Error::MissingClass(1));
    }
    if neg.is_empty() {
        return Err(Error::MissingClass(0));
    }
    let keep_n = pos.len().min(neg.len());
    let mut keep = alloc::vec![true; channels.len()];
    let majority = if pos.len() > neg.len() { pos } else { neg };
    if majority.len() > keep_n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = majority;
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[keep_n..] {
            keep[i] = false;
        }
    }
    Ok(channels
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(c, _)| c.clone())
        .collect())
}

/// Disjoint channel-id sets. Whole channels are assigned, so no window of a
/// channel can appear in two splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub balance_seed: u64,
}

impl DatasetSplit {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn ids_mut(&mut self, split: Split) -> &mut Vec<String> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

/// Default train/val/test fractions.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.1, 0.2];

/// Largest-remainder rounding of `n * fractions`, then every split with a
/// positive fraction is topped up to one channel (taken from the largest).
fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: [f64; 3] = core::array::from_fn(|i| n as f64 * fractions[i]);
    // Round near-integers first so exact products like 10 * 0.7 land on 7.
    let mut sizes: [usize; 3] = core::array::from_fn(|i| {
        let r = libm::round(exact[i]);
        if libm::fabs(exact[i] - r) < 1e-9 {
            r as usize
        } else {
            libm::floor(exact[i]) as usize
        }
    });
    let mut remaining = n.saturating_sub(sizes.iter().sum());
    let mut order: [usize; 3] = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    for i in 0..3 {
        if fractions[i] > 0.0 && sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], core::cmp::Reverse(j))).unwrap();
            if sizes[donor] > 1 {
                sizes[donor] -= 1;
                sizes[i] = 1;
            }
        }
    }
    sizes
}

/// Assigns whole channels to train/val/test.
///
/// If every channel carries a preassigned split it is honored verbatim.
/// Otherwise channels are shuffled per label, interleaved so each label is
/// spread evenly along the sequence, and cut into contiguous chunks, which
/// stratifies every split by label up to one channel.
pub fn split_dataset(channels: &[Channel], fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let preassigned = channels.iter().filter(|c| c.split.is_some()).count();
    if preassigned == channels.len() && !channels.is_empty() {
        let mut split = DatasetSplit {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            balance_seed: seed,
        };
        for c in channels {
            split.ids_mut(c.split.unwrap()).push(c.id.clone());
        }
        return Ok(split);
    }
    if preassigned != 0 {
        return Err(Error::PartialSplitAssignment);
    }

    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| *f < 0.0 || !f.is_finite()) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::InvalidFractions(sum));
    }
    let needed = fractions.iter().filter(|f| **f > 0.0).count();
    if channels.len() < needed.max(3) {
        return Err(Error::TooFewChannels {
            channels: channels.len(),
            splits: needed.max(3),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (position key, label, index): the i-th of n_c channels of a label sits at
    // (i + 0.5) / n_c on the unit interval.
    let mut keyed: Vec<(f64, u8, usize)> = Vec::with_capacity(channels.len());
    for label in [0u8, 1] {
        let mut members: Vec<usize> = (0..channels.len())
            .filter(|&i| channels[i].label == label)
            .collect();
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        keyed.extend(
            members
                .iter()
                .enumerate()
                .map(|(rank, &i)| ((rank as f64 + 0.5) / n, label, i)),
        );
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let sizes = split_sizes(channels.len(), fractions);
    let mut iter = keyed.into_iter().map(|(_, _, i)| channels[i].id.clone());
    let train = iter.by_ref().take(sizes[0]).collect();
    let val = iter.by_ref().take(sizes[1]).collect();
    let test = iter.collect();
    Ok(DatasetSplit {
        train,
        val,
        test,
        balance_seed: seed,
    })
}

/// Splits, then balances train and val independently. The test split keeps
/// its natural class ratio.
pub fn prepare_split(channels: &[Channel], fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let mut split = split_dataset(channels, fractions, seed)?;
    for (offset, which) in [Split::Train, Split::Val].into_iter().enumerate() {
        let members: Vec<Channel> = split
            .ids(which)
            .iter()
            .map(|id| channels.iter().find(|c| &c.id == id).unwrap().clone())
            .collect();
        let balanced = balance_classes(&members, seed.wrapping_add(offset as u64 + 1))?;
        *split.ids_mut(which) = balanced.into_iter().map(|c| c.id).collect();
    }
    Ok(split)
}

/// Windows ordered by start offset; `start = window_index * stride`.
pub fn extract_windows<'a>(channel: &'a Channel, config: &WindowConfig) -> Vec<Window<'a>> {
    let count = config.window_count(channel.len());
    (0..count)
        .map(|k| {
            let start = k * config.stride;
            Window {
                channel_id: &channel.id,
                window_index: k,
                start,
                values: &channel.values[start..start + config.window_length],
            }
        })
        .collect()
}
