// SPDX-License-Identifier: Apache-2.0

//! Support scores to softmax weights, and the convex mix of window posteriors.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::WindowPosterior;
use crate::retrieval::SimilarityMetric;
use crate::{Error, Result, NUM_CLASSES};

/// How window posteriors are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Softmax over retrieval supports.
    #[default]
    Retrieval,
    /// Every window weighted `1/n` (plain sparse-sampling averaging).
    Uniform,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Retrieval => "retrieval",
            Self::Uniform => "uniform",
        }
    }
}

impl core::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(Self::Retrieval),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::UnknownName {
                kind: "aggregation mode",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub temperature: f64,
    pub m: usize,
    pub metric: SimilarityMetric,
    pub mode: AggregationMode,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            m: 10,
            metric: SimilarityMetric::Pearson,
            mode: AggregationMode::Retrieval,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if self.m == 0 {
            return Err(Error::ZeroNeighbors);
        }
        Ok(())
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

/// Convex weights over a series' windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    pub alphas: Vec<f64>,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            alphas: alloc::vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// `alpha_k = exp(s_k / tau) / sum_t exp(s_t / tau)`, evaluated after
/// subtracting the maximum support.
pub fn softmax_weights(supports: &[f64], temperature: f64) -> Result<WeightVector> {
    check_temperature(temperature)?;
    if supports.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    if supports.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("support"));
    }
    let max = supports.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = supports
        .iter()
        .map(|s| libm::exp((s - max) / temperature))
        .collect();
    let z: f64 = exps.iter().sum();
    Ok(WeightVector {
        alphas: exps.into_iter().map(|a| a / z).collect(),
    })
}

/// `sum_k alpha_k * p_k`.
pub fn mix(weights: &WeightVector, posteriors: &[WindowPosterior]) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    for (a, p) in weights.alphas.iter().zip(posteriors) {
        for (o, q) in out.iter_mut().zip(&p.probs) {
            *o += a * q;
        }
    }
    out
}

/// Series-level posterior with everything needed to explain it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPrediction {
    pub series_id: String,
    pub probs: [f64; NUM_CLASSES],
    pub weights: WeightVector,
    pub supports: Vec<f64>,
    pub window_posteriors: Vec<WindowPosterior>,
    /// `window_index` of each aggregated window, parallel to the other vectors.
    pub window_indices: Vec<usize>,
}

impl SeriesPrediction {
    pub fn prob_class1(&self) -> f64 {
        self.probs[1]
    }

    /// Argmax with ties going to class 1.
    pub fn predicted_class(&self) -> usize {
        if self.probs[1] >= self.probs[0] {
            1
        } else {
            0
        }
    }

    /// Recomputes `sum_k alpha_k p_k` from the stored parts.
    pub fn recompute(&self) -> [f64; NUM_CLASSES] {
        mix(&self.weights, &self.window_posteriors)
    }
}

/// Mixes window posteriors with weights derived from `supports` (or uniform
/// weights in [`AggregationMode::Uniform`]).
pub fn aggregate(
    series_id: &str,
    window_indices: Vec<usize>,
    posteriors: Vec<WindowPosterior>,
    supports: Vec<f64>,
    config: &AggregationConfig,
) -> Result<SeriesPrediction> {
    if posteriors.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    for len in [supports.len(), window_indices.len()] {
        if len != posteriors.len() {
            return Err(Error::LengthMismatch {
                expected: posteriors.len(),
                actual: len,
            });
        }
    }
    let weights = match config.mode {
        AggregationMode::Retrieval => softmax_weights(&supports, config.temperature)?,
        AggregationMode::Uniform => WeightVector::uniform(posteriors.len()),
    };
    let probs = mix(&weights, &posteriors);
    Ok(SeriesPrediction {
        series_id: series_id.into(),
        probs,
        weights,
        supports,
        window_posteriors: posteriors,
        window_indices,
    })
}

/// `d alpha_k / d s_k^(j) = alpha_k (1 - alpha_k) / (m tau)`, treating the
/// supports as free variables.
pub fn weight_sensitivity(supports: &[f64], temperature: f64, m: usize, k: usize) -> Result<f64> {
    if k >= supports.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: supports.len(),
        });
    }
    if m == 0 {
        return Err(Error::ZeroNeighbors);
    }
    let alpha = softmax_weights(supports, temperature)?.alphas[k];
    Ok(alpha * (1.0 - alpha) / (m as f64 * temperature))
}
