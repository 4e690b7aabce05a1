// SPDX-License-Identifier: Apache-2.0

//! Window attributions and neighbor leaderboards.
//!
//! The series posterior is `sum_k alpha_k p_k`, so `alpha_k p_{k,c}` is an
//! exact additive share of the class-`c` probability. Each influential window
//! carries the neighbors whose similarities set its support, and through the
//! softmax, its weight.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aggregation::{softmax_weights, weight_sensitivity, AggregationConfig, SeriesPrediction};
use crate::dataset::{Window, WindowConfig};
use crate::retrieval::NeighborSet;
use crate::{Error, Result, NUM_CLASSES};

pub const DEFAULT_TOP_K: usize = 5;

/// Tolerance used when checking that attributions add up to the posterior.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAttribution {
    pub window_index: usize,
    pub start: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub start_seconds: Option<f64>,
    pub prob_class1: f64,
    pub support: f64,
    pub weight: f64,
    /// `weight * posterior[c]` for the predicted class `c`.
    pub contribution: f64,
    /// `weight * posterior` for every class.
    pub contributions: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborLeaderboardEntry {
    pub rank: usize,
    pub neighbor_index: usize,
    pub neighbor_start: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub neighbor_start_seconds: Option<f64>,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub metric: crate::retrieval::SimilarityMetric,
    pub m: usize,
    pub temperature: f64,
    pub window_length: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub series_id: String,
    pub predicted_class: usize,
    pub series_probs: [f64; NUM_CLASSES],
    pub config: ReportConfig,
    /// Sorted by contribution, descending (ties by window index).
    pub attributions: Vec<WindowAttribution>,
    /// Keyed by window index (as a string in JSON).
    pub leaderboards: BTreeMap<String, Vec<NeighborLeaderboardEntry>>,
}

impl ExplanationReport {
    /// Largest `|sum_k contribution_k[c] - series_probs[c]|` over classes.
    pub fn additivity_error(&self) -> f64 {
        (0..NUM_CLASSES)
            .map(|c| {
                let sum: f64 = self.attributions.iter().map(|a| a.contributions[c]).sum();
                libm::fabs(sum - self.series_probs[c])
            })
            .fold(0.0, f64::max)
    }

    pub fn check_additivity(&self) -> bool {
        self.additivity_error() <= ADDITIVITY_TOLERANCE
    }

    pub fn leaderboard(&self, window_index: usize) -> Option<&[NeighborLeaderboardEntry]> {
        self.leaderboards
            .get(&alloc::format!("{window_index}"))
            .map(Vec::as_slice)
    }
}

fn seconds(offset: usize, hz: Option<f64>) -> Option<f64> {
    hz.filter(|h| *h > 0.0).map(|h| offset as f64 / h)
}

/// Builds attributions for every aggregated window and leaderboards for the
/// `top_k_windows` largest contributions.
///
/// `neighbor_sets` and `windows` must cover the series' windows (any order);
/// `sampling_rate_hz`, when known, adds offsets in seconds.
pub fn build_report(
    prediction: &SeriesPrediction,
    neighbor_sets: &[NeighborSet],
    windows: &[Window<'_>],
    window_config: &WindowConfig,
    aggregation: &AggregationConfig,
    top_k_windows: usize,
    sampling_rate_hz: Option<f64>,
) -> Result<ExplanationReport> {
    let n = prediction.window_indices.len();
    if neighbor_sets.len() != windows.len() || n > windows.len() {
        return Err(Error::LengthMismatch {
            expected: windows.len(),
            actual: neighbor_sets.len().max(n),
        });
    }
    let start_of: BTreeMap<usize, usize> = windows.iter().map(|w| (w.window_index, w.start)).collect();
    let sets: BTreeMap<usize, &NeighborSet> = neighbor_sets.iter().map(|s| (s.query_index, s)).collect();
    let lookup_start = |k: usize| {
        start_of.get(&k).copied().ok_or(Error::IndexOutOfRange {
            index: k,
            len: windows.len(),
        })
    };

    let class = prediction.predicted_class();
    let mut attributions = Vec::with_capacity(n);
    for i in 0..n {
        let k = prediction.window_indices[i];
        let weight = prediction.weights.alphas[i];
        let posterior = &prediction.window_posteriors[i];
        let contributions = posterior.probs.map(|p| weight * p);
        let start = lookup_start(k)?;
        attributions.push(WindowAttribution {
            window_index: k,
            start,
            start_seconds: seconds(start, sampling_rate_hz),
            prob_class1: posterior.probs[1],
            support: prediction.supports[i],
            weight,
            contribution: contributions[class],
            contributions,
        });
    }
    attributions.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then(a.window_index.cmp(&b.window_index))
    });

    let mut leaderboards = BTreeMap::new();
    for a in attributions.iter().take(top_k_windows) {
        let set = sets.get(&a.window_index).ok_or(Error::IndexOutOfRange {
            index: a.window_index,
            len: neighbor_sets.len(),
        })?;
        let entries = set
            .neighbors
            .iter()
            .enumerate()
            .map(|(r, nb)| {
                let start = lookup_start(nb.index)?;
                Ok(NeighborLeaderboardEntry {
                    rank: r + 1,
                    neighbor_index: nb.index,
                    neighbor_start: start,
                    neighbor_start_seconds: seconds(start, sampling_rate_hz),
                    similarity: nb.similarity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        leaderboards.insert(alloc::format!("{}", a.window_index), entries);
    }

    Ok(ExplanationReport {
        series_id: prediction.series_id.clone(),
        predicted_class: class,
        series_probs: prediction.probs,
        config: ReportConfig {
            metric: aggregation.metric,
            m: aggregation.m,
            temperature: aggregation.temperature,
            window_length: window_config.window_length,
            stride: window_config.stride,
        },
        attributions,
        leaderboards,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub prob_class1: f64,
    pub weight: f64,
}

/// Per-window probability and weight, ordered by start offset.
pub fn heatmap_series(prediction: &SeriesPrediction, window_config: &WindowConfig) -> Vec<HeatmapRow> {
    let mut rows: Vec<HeatmapRow> = prediction
        .window_indices
        .iter()
        .zip(&prediction.window_posteriors)
        .zip(&prediction.weights.alphas)
        .map(|((&k, post), &weight)| {
            let start = k * window_config.stride;
            HeatmapRow {
                start,
                end: start + window_config.window_length,
                prob_class1: post.probs[1],
                weight,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.start);
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub window_index: usize,
    pub neighbor_index: Option<usize>,
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub observed_delta: f64,
    /// `epsilon * alpha (1 - alpha) / (m tau)`.
    pub predicted_delta: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub epsilon: f64,
    pub checks: Vec<MonotonicityCheck>,
    pub passed: bool,
}

pub const MONOTONICITY_EPSILON: f64 = 1e-4;

/// For every leaderboard window, raises its top neighbor's similarity by
/// `epsilon`, recomputes the support and the softmax over all supports, and
/// checks that the window's weight strictly increases. A single-window series
/// passes vacuously.
pub fn verify_monotonicity(report: &ExplanationReport, epsilon: f64) -> Result<MonotonicityReport> {
    let by_index: Vec<usize> = report.attributions.iter().map(|a| a.window_index).collect();
    let supports: Vec<f64> = report.attributions.iter().map(|a| a.support).collect();
    let tau = report.config.temperature;
    let mut checks = Vec::new();
    if supports.len() >= 2 {
        for (key, entries) in &report.leaderboards {
            let Some(first) = entries.first() else {
                continue;
            };
            let k: usize = key.parse().map_err(|_| Error::UnknownName {
                kind: "leaderboard key",
                value: key.clone(),
            })?;
            let pos = by_index.iter().position(|&i| i == k).ok_or(Error::IndexOutOfRange {
                index: k,
                len: by_index.len(),
            })?;
            let m_eff = entries.len();
            let mut sims: Vec<f64> = entries.iter().map(|e| e.similarity).collect();
            sims[0] += epsilon;
            let mut perturbed = supports.clone();
            perturbed[pos] = sims.iter().sum::<f64>() / m_eff as f64;
            // Re-derive the unperturbed support from the same entries so the
            // difference reflects only the perturbation.
            let mut base = supports.clone();
            base[pos] = entries.iter().map(|e| e.similarity).sum::<f64>() / m_eff as f64;
            let a_before = softmax_weights(&base, tau)?.alphas[pos];
            let a_after = softmax_weights(&perturbed, tau)?.alphas[pos];
            let predicted = epsilon * weight_sensitivity(&base, tau, m_eff, pos)?;
            let observed = a_after - a_before;
            checks.push(MonotonicityCheck {
                window_index: k,
                neighbor_index: Some(first.neighbor_index),
                alpha_before: a_before,
                alpha_after: a_after,
                observed_delta: observed,
                predicted_delta: predicted,
                passed: a_after > a_before,
            });
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(MonotonicityReport {
        epsilon,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::aggregate;
    use crate::backbone::WindowPosterior;
    use crate::dataset::{extract_windows, Channel};
    use crate::retrieval::{neighbor_sets, SimilarityMetric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        channel: Channel,
        wcfg: WindowConfig,
        acfg: AggregationConfig,
    }

    fn fixture(len: usize, seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Fixture {
            channel: Channel::new("ch", (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 1).unwrap(),
            wcfg: WindowConfig::new(8, 3).unwrap(),
            acfg: AggregationConfig {
                m: 3,
                metric: SimilarityMetric::Cosine,
                ..Default::default()
            },
        }
    }

    fn report_for(f: &Fixture, seed: u64) -> (ExplanationReport, SeriesPrediction, Vec<NeighborSet>) {
        let windows = extract_windows(&f.channel, &f.wcfg);
        let sets = neighbor_sets(&windows, f.acfg.metric, f.acfg.m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let posts = windows
            .iter()
            .map(|_| {
                let p = rng.random_range(0.0..1.0);
                WindowPosterior::from_probs([1.0 - p, p])
            })
            .collect();
        let pred = aggregate(
            "ch",
            windows.iter().map(|w| w.window_index).collect(),
            posts,
            sets.iter().map(|s| s.mean_support).collect(),
            &f.acfg,
        )
        .unwrap();
        let report = build_report(&pred, &sets, &windows, &f.wcfg, &f.acfg, 5, Some(250.0)).unwrap();
        (report, pred, sets)
    }

    #[test]
    fn single_window_report() {
        let f = fixture(8, 0);
        let (report, pred, _) = report_for(&f, 1);
        assert_eq!(report.attributions.len(), 1);
        let a = &report.attributions[0];
        assert_eq!(a.weight, 1.0);
        assert_eq!(a.contribution, pred.probs[report.predicted_class]);
        assert!(report.leaderboards["0"].is_empty());
        let check = verify_monotonicity(&report, MONOTONICITY_EPSILON).unwrap();
        assert!(check.passed);
        assert!(check.checks.is_empty());
    }

    #[test]
    fn contributions_add_up() {
        for seed in 0..30 {
            let f = fixture(40 + seed as usize, seed);
            let (report, _, _) = report_for(&f, seed);
            assert!(report.check_additivity(), "error {}", report.additivity_error());
            let c = report.predicted_class;
            let sum: f64 = report.attributions.iter().map(|a| a.contribution).sum();
            assert!((sum - report.series_probs[c]).abs() < 1e-9);
            for a in &report.attributions {
                assert!((a.contribution - a.weight * if c == 1 { a.prob_class1 } else { 1.0 - a.prob_class1 }).abs() < 1e-12);
            }
            for w in report.attributions.windows(2) {
                assert!(w[0].contribution >= w[1].contribution);
            }
        }
    }

    #[test]
    fn leaderboard_is_retrieval_output_verbatim() {
        let f = fixture(8 + 9 * 3, 4);
        let (report, _, sets) = report_for(&f, 2);
        assert_eq!(report.attributions.len(), 10);
        assert_eq!(report.leaderboards.len(), 5);
        let top = report.attributions[0].window_index;
        let set = sets.iter().find(|s| s.query_index == top).unwrap();
        let board = report.leaderboard(top).unwrap();
        assert_eq!(board.len(), set.neighbors.len());
        for (rank, (e, n)) in board.iter().zip(&set.neighbors).enumerate() {
            assert_eq!(e.rank, rank + 1);
            assert_eq!(e.neighbor_index, n.index);
            assert_eq!(e.neighbor_start, n.index * 3);
            assert_eq!(e.similarity.to_bits(), n.similarity.to_bits());
            assert_eq!(e.neighbor_start_seconds, Some(e.neighbor_start as f64 / 250.0));
        }
        for key in report.leaderboards.keys() {
            let k: usize = key.parse().unwrap();
            assert!(report.attributions.iter().any(|a| a.window_index == k));
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let f = fixture(30, 5);
        let windows = extract_windows(&f.channel, &f.wcfg);
        let sets = neighbor_sets(&windows, f.acfg.metric, f.acfg.m).unwrap();
        let (_, pred, _) = report_for(&f, 0);
        let err = build_report(&pred, &sets[1..], &windows, &f.wcfg, &f.acfg, 5, None);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn heatmap_rows() {
        let f = fixture(50, 6);
        let (_, pred, _) = report_for(&f, 3);
        let rows = heatmap_series(&pred, &f.wcfg);
        assert_eq!(rows.len(), pred.window_indices.len());
        assert!((rows.iter().map(|r| r.weight).sum::<f64>() - 1.0).abs() < 1e-9);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.start, i * 3);
            assert_eq!(r.end, r.start + 8);
            assert!((0.0..=1.0).contains(&r.prob_class1));
        }
    }

    #[test]
    fn monotonicity_delta_matches_closed_form() {
        for seed in 0..20 {
            let f = fixture(60, 10 + seed);
            let (report, _, _) = report_for(&f, seed);
            let check = verify_monotonicity(&report, MONOTONICITY_EPSILON).unwrap();
            assert!(check.passed);
            assert_eq!(check.checks.len(), 5);
            for c in &check.checks {
                assert!(c.observed_delta > 0.0);
                let rel = (c.observed_delta - c.predicted_delta).abs() / c.predicted_delta;
                assert!(rel < 0.05, "rel {rel}");
            }
        }
    }

    #[test]
    fn report_is_deterministic() {
        let f = fixture(45, 7);
        assert_eq!(report_for(&f, 1).0, report_for(&f, 1).0);
    }
}
