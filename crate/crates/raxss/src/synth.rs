// SPDX-License-Identifier: Apache-2.0

//! Synthetic variable-length datasets: Gaussian background, with a fixed
//! positive bump injected into label-1 channels.
//!
//! Occurrences sit on a grid of `pattern_length`-sample slots so they never
//! overlap; `rare_pattern_rate` is the fraction of slots holding the motif,
//! with at least one occurrence per label-1 channel.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use raxss_core::dataset::Channel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub length_range: (usize, usize),
    pub rare_pattern_rate: f64,
    pub noise_sigma: f64,
    pub pattern_length: usize,
    pub pattern_amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 40,
            length_range: (2000, 6000),
            rare_pattern_rate: 0.02,
            noise_sigma: 1.0,
            pattern_length: 64,
            pattern_amplitude: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("length_range ({0}, {1}) has min > max")]
    LengthRange(usize, usize),
    #[error("series length must be at least 1")]
    ZeroLength,
    #[error("rare_pattern_rate {0} is outside [0, 1]")]
    Rate(f64),
    #[error("noise_sigma {0} must be finite and nonnegative")]
    Sigma(f64),
    #[error("pattern_length must be at least 1")]
    PatternLength,
    #[error("pattern_amplitude {0} must be finite and nonzero")]
    Amplitude(f64),
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let (lo, hi) = self.length_range;
        if lo > hi {
            return Err(SpecError::LengthRange(lo, hi));
        }
        if lo == 0 {
            return Err(SpecError::ZeroLength);
        }
        if !(0.0..=1.0).contains(&self.rare_pattern_rate) {
            return Err(SpecError::Rate(self.rare_pattern_rate));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SpecError::Sigma(self.noise_sigma));
        }
        if self.pattern_length == 0 {
            return Err(SpecError::PatternLength);
        }
        if !self.pattern_amplitude.is_finite() || self.pattern_amplitude == 0.0 {
            return Err(SpecError::Amplitude(self.pattern_amplitude));
        }
        Ok(())
    }

    /// One half-sine period scaled to the amplitude.
    pub fn motif(&self) -> Vec<f64> {
        let p = self.pattern_length as f64;
        (0..self.pattern_length)
            .map(|i| self.pattern_amplitude * (std::f64::consts::PI * (i as f64 + 0.5) / p).sin())
            .collect()
    }

    /// Number of motif occurrences for a series of `length` samples.
    pub fn occurrences(&self, length: usize) -> usize {
        let slots = length.div_ceil(self.pattern_length);
        let wanted = (self.rare_pattern_rate * slots as f64).round() as usize;
        wanted.max(1).min(slots)
    }
}

/// Labels alternate 0, 1, 0, ... so both classes are present from two series
/// on and balanced for even counts.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<Channel>, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let motif = spec.motif();
    let width = spec.n_series.saturating_sub(1).to_string().len().max(3);
    let mut channels = Vec::with_capacity(spec.n_series);
    for i in 0..spec.n_series {
        let label = (i % 2) as i64;
        let length = rng.random_range(spec.length_range.0..=spec.length_range.1);
        let mut values: Vec<f64> = (0..length).map(|_| noise.sample(&mut rng)).collect();
        if label == 1 {
            let slots = length.div_ceil(spec.pattern_length);
            for slot in sample(&mut rng, slots, spec.occurrences(length)) {
                let start = slot * spec.pattern_length;
                for (v, m) in values[start..].iter_mut().zip(&motif) {
                    *v += m;
                }
            }
        }
        let id = format!("ch{i:0width$}");
        channels.push(Channel::new(id, values, label).expect("generated channel is valid"));
    }
    Ok(channels)
}
