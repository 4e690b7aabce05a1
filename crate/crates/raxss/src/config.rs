// SPDX-License-Identifier: Apache-2.0

//! Run configuration. Files are JSON with the field names below; missing
//! fields take their defaults and CLI flags override file values.

use std::path::{Path, PathBuf};

use anyhow::Context;
use raxss_core::aggregation::AggregationConfig;
use raxss_core::backbone::PatchMlpConfig;
use raxss_core::dataset::{WindowConfig, DEFAULT_FRACTIONS};
use raxss_core::explain::DEFAULT_TOP_K;
use raxss_core::metrics::DEFAULT_THRESHOLD;
use raxss_core::training::{TrainConfig, WarmupCosine};
use serde::{Deserialize, Serialize};

use crate::synth::SyntheticSpec;

/// Seeds used when a config names none.
pub const DEFAULT_SEEDS: [u64; 5] = [69421, 69422, 69423, 69424, 69425];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneSettings {
    pub patch_size: usize,
    pub hidden_width: usize,
}

impl Default for BackboneSettings {
    fn default() -> Self {
        Self {
            patch_size: 24,
            hidden_width: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: WarmupCosine,
    pub weight_decay: f64,
    pub patience: usize,
    pub threshold: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            schedule: t.schedule,
            weight_decay: t.weight_decay,
            patience: t.patience,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Seeds the train/val/test assignment and class balancing. Kept apart
    /// from the training seeds so every seed sees the same test split.
    pub split_seed: u64,
    pub fractions: [f64; 3],
    pub window: WindowConfig,
    pub aggregation: AggregationConfig,
    pub backbone: BackboneSettings,
    pub train: TrainSettings,
    pub top_k: usize,
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            split_seed: 0,
            fractions: DEFAULT_FRACTIONS,
            window: WindowConfig::default(),
            aggregation: AggregationConfig::default(),
            backbone: BackboneSettings::default(),
            train: TrainSettings::default(),
            top_k: DEFAULT_TOP_K,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn backbone_config(&self) -> PatchMlpConfig {
        PatchMlpConfig {
            input_length: self.window.window_length,
            patch_size: self.backbone.patch_size,
            hidden_width: self.backbone.hidden_width,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            schedule: self.train.schedule,
            weight_decay: self.train.weight_decay,
            patience: self.train.patience,
            seed,
            threshold: self.train.threshold,
            aggregation: self.aggregation,
            window: self.window,
        }
    }

    pub fn dataset_path(&self) -> anyhow::Result<&Path> {
        self.dataset
            .as_deref()
            .context("no dataset path (set `dataset` in the config or pass --dataset)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(c.window.window_length, 1024);
        assert_eq!(c.window.stride, 5);
        assert_eq!(c.aggregation.m, 10);
        assert_eq!(c.aggregation.temperature, 1.0);
        assert_eq!(c.train.patience, 5);
        assert_eq!(c.train.weight_decay, 1e-6);
        assert_eq!(c.train.schedule.max_lr, 3e-4);
        assert_eq!(c.train.schedule.warmup_steps, 100);
        assert_eq!(c.train.schedule.t_max, 700);
        assert_eq!(c.train.batch_size, 8192);
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.train.threshold, 0.5);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.dataset = Some("data".into());
        c.seeds = vec![1, 2];
        c.aggregation.temperature = 0.123456789012345;
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"window": {"stride": 32}, "aggregation": {"metric": "cosine"}}"#).unwrap();
        assert_eq!(c.window.stride, 32);
        assert_eq!(c.window.window_length, 1024);
        assert_eq!(c.aggregation.metric, raxss_core::retrieval::SimilarityMetric::Cosine);
        assert_eq!(c.aggregation.m, 10);
    }
}
