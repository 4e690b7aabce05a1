// SPDX-License-Identifier: Apache-2.0

//! Within-series similarity retrieval.
//!
//! Every window is compared against every other window of the same series
//! (exact search; series-local pools are small). Overlapping windows are valid
//! neighbors, only the window itself is excluded.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    #[default]
    Pearson,
    Cosine,
}

impl SimilarityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMetric::Pearson => "pearson",
            SimilarityMetric::Cosine => "cosine",
        }
    }

    /// Pearson correlation or cosine similarity, clamped to `[-1, 1]`.
    /// Zero variance (Pearson) or zero norm (cosine) yields 0.
    pub fn similarity(self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        if a.len() < 2 {
            return Err(Error::TooShort(a.len()));
        }
        let pa = Prepared::new(self, a);
        let pb = Prepared::new(self, b);
        Ok(pa.similarity(&pb))
    }
}

impl core::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "cosine" => Ok(Self::Cosine),
            _ => Err(Error::UnknownName {
                kind: "similarity metric",
                value: s.into(),
            }),
        }
    }
}

/// A window reduced to the vector whose dot products give the similarity:
/// centered values for Pearson, raw values for cosine, plus its squared norm.
struct Prepared {
    values: Vec<f64>,
    sq_norm: f64,
}

impl Prepared {
    fn new(metric: SimilarityMetric, w: &[f64]) -> Self {
        let values: Vec<f64> = match metric {
            SimilarityMetric::Pearson => {
                let mean = w.iter().sum::<f64>() / w.len() as f64;
                w.iter().map(|x| x - mean).collect()
            }
            SimilarityMetric::Cosine => w.to_vec(),
        };
        let sq_norm = dot(&values, &values);
        Self { values, sq_norm }
    }

    fn similarity(&self, other: &Prepared) -> f64 {
        if self.sq_norm == 0.0 || other.sq_norm == 0.0 {
            return 0.0;
        }
        // sqrt(a * b) rather than sqrt(a) * sqrt(b): for a == b this is exact,
        // so self-similarity of content-equal windows is exactly 1.
        let s = dot(&self.values, &other.values) / libm::sqrt(self.sq_norm * other.sq_norm);
        s.clamp(-1.0, 1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub similarity: f64,
}

/// Top-m nonidentical neighbors of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub query_index: usize,
    /// Descending by similarity, ties by ascending index.
    pub neighbors: Vec<Neighbor>,
    pub m_effective: usize,
    pub mean_support: f64,
}

impl NeighborSet {
    fn from_candidates(query_index: usize, mut candidates: Vec<Neighbor>, m: usize) -> Self {
        candidates.sort_by(rank_order);
        candidates.truncate(m);
        let m_effective = candidates.len();
        let mean_support = if m_effective == 0 {
            0.0
        } else {
            candidates.iter().map(|n| n.similarity).sum::<f64>() / m_effective as f64
        };
        Self {
            query_index,
            neighbors: candidates,
            m_effective,
            mean_support,
        }
    }
}

fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.index.cmp(&b.index))
}

fn check_windows(windows: &[Window<'_>]) -> Result<usize> {
    let len = windows.first().map_or(0, |w| w.values.len());
    if let Some(w) = windows.iter().find(|w| w.values.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: w.values.len(),
        });
    }
    if windows.len() > 1 && len < 2 {
        return Err(Error::TooShort(len));
    }
    Ok(len)
}

/// Exact top-m neighbors of `windows[query_index]` among the other windows of
/// the same series. `windows[i]` is identified by its `window_index`.
pub fn retrieve_neighbors(
    windows: &[Window<'_>],
    query_index: usize,
    metric: SimilarityMetric,
    m: usize,
) -> Result<NeighborSet> {
    if m == 0 {
        return Err(Error::ZeroNeighbors);
    }
    let query = windows
        .iter()
        .position(|w| w.window_index == query_index)
        .ok_or(Error::IndexOutOfRange {
            index: query_index,
            len: windows.len(),
        })?;
    check_windows(windows)?;
    let q = Prepared::new(metric, windows[query].values);
    let candidates = windows
        .iter()
        .filter(|w| w.window_index != query_index)
        .map(|w| Neighbor {
            index: w.window_index,
            similarity: q.similarity(&Prepared::new(metric, w.values)),
        })
        .collect();
    Ok(NeighborSet::from_candidates(query_index, candidates, m))
}

/// Neighbor sets for every window, in the order of `windows`.
///
/// The pairwise similarity matrix is computed once (the metric is symmetric
/// bit-for-bit) and each row is ranked independently.
pub fn neighbor_sets(
    windows: &[Window<'_>],
    metric: SimilarityMetric,
    m: usize,
) -> Result<Vec<NeighborSet>> {
    if m == 0 {
        return Err(Error::ZeroNeighbors);
    }
    check_windows(windows)?;
    let n = windows.len();
    let prepared: Vec<Prepared> = windows.iter().map(|w| Prepared::new(metric, w.values)).collect();
    let mut matrix = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = prepared[i].similarity(&prepared[j]);
            matrix[i * n + j] = s;
            matrix[j * n + i] = s;
        }
    }
    Ok((0..n)
        .map(|i| {
            let candidates = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    index: windows[j].window_index,
                    similarity: matrix[i * n + j],
                })
                .collect();
            NeighborSet::from_candidates(windows[i].window_index, candidates, m)
        })
        .collect())
}

/// Mean support of every window, in the order of `windows`.
pub fn support_scores(
    windows: &[Window<'_>],
    metric: SimilarityMetric,
    m: usize,
) -> Result<Vec<f64>> {
    Ok(neighbor_sets(windows, metric, m)?
        .into_iter()
        .map(|s| s.mean_support)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use SimilarityMetric::{Cosine, Pearson};

    fn windows_of(data: &[Vec<f64>]) -> Vec<Window<'_>> {
        data.iter()
            .enumerate()
            .map(|(k, v)| Window {
                channel_id: "s",
                window_index: k,
                start: k,
                values: v,
            })
            .collect()
    }

    /// Textbook formulas, independent of `Prepared`.
    fn oracle_similarity(metric: SimilarityMetric, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = match metric {
            Pearson => (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n),
            Cosine => (0.0, 0.0),
        };
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma) * (x - ma);
            db += (y - mb) * (y - mb);
        }
        if da == 0.0 || db == 0.0 {
            0.0
        } else {
            num / (libm::sqrt(da) * libm::sqrt(db))
        }
    }

    #[test]
    fn similarity_examples() {
        assert!((Pearson.similarity(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((Pearson.similarity(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(Cosine.similarity(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(Pearson.similarity(&[5.0, 5.0, 5.0], &[1.0, 7.0, 2.0]).unwrap(), 0.0);
        assert_eq!(Cosine.similarity(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn similarity_errors() {
        assert!(matches!(
            Pearson.similarity(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { expected: 2, actual: 3 })
        ));
        assert_eq!(Cosine.similarity(&[1.0], &[1.0]), Err(Error::TooShort(1)));
    }

    #[test]
    fn self_similarity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w: Vec<f64> = (0..33).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(Pearson.similarity(&w, &w).unwrap(), 1.0);
            assert_eq!(Cosine.similarity(&w, &w).unwrap(), 1.0);
        }
    }

    #[test]
    fn matches_oracle_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let len = rng.random_range(2..50);
            let a: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
            for metric in [Pearson, Cosine] {
                let got = metric.similarity(&a, &b).unwrap();
                assert!((got - oracle_similarity(metric, &a, &b)).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&got));
                assert_eq!(got, metric.similarity(&b, &a).unwrap());
            }
        }
    }

    #[test]
    fn scale_behavior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = rng.random_range(0.01..100.0);
            let d = rng.random_range(-50.0..50.0);
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            let affine: Vec<f64> = a.iter().map(|x| c * x + d).collect();
            assert!((Cosine.similarity(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
            assert!((Pearson.similarity(&a, &affine).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn four_windows_top_two_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let windows = windows_of(&data);
        for k in 0..4 {
            let set = retrieve_neighbors(&windows, k, Pearson, 2).unwrap();
            let mut all: Vec<(usize, f64)> = (0..4)
                .filter(|&j| j != k)
                .map(|j| (j, oracle_similarity(Pearson, &data[k], &data[j])))
                .collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let idx: Vec<usize> = set.neighbors.iter().map(|n| n.index).collect();
            assert_eq!(idx, vec![all[0].0, all[1].0]);
            assert_eq!(set.m_effective, 2);
        }
    }

    #[test]
    fn identical_content_ties_break_by_index() {
        let w = vec![0.3, -1.0, 2.0, 0.5];
        let data = vec![w.clone(), w.clone(), w.clone(), w.clone(), w];
        let windows = windows_of(&data);
        let set = retrieve_neighbors(&windows, 2, Cosine, 3).unwrap();
        assert_eq!(
            set.neighbors,
            vec![
                Neighbor { index: 0, similarity: 1.0 },
                Neighbor { index: 1, similarity: 1.0 },
                Neighbor { index: 3, similarity: 1.0 },
            ]
        );
        assert_eq!(set.mean_support, 1.0);
    }

    #[test]
    fn degenerate_series() {
        let data = vec![vec![1.0, 2.0, 3.0]];
        let windows = windows_of(&data);
        let set = retrieve_neighbors(&windows, 0, Pearson, 10).unwrap();
        assert!(set.neighbors.is_empty());
        assert_eq!(set.m_effective, 0);
        assert_eq!(set.mean_support, 0.0);
        assert_eq!(support_scores(&windows, Pearson, 10).unwrap(), vec![0.0]);
        assert_eq!(retrieve_neighbors(&windows, 0, Pearson, 0), Err(Error::ZeroNeighbors));
        assert!(matches!(
            retrieve_neighbors(&windows, 3, Pearson, 1),
            Err(Error::IndexOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn two_windows_support_is_mutual_similarity() {
        let data = vec![vec![1.0, 3.0, 2.0, 0.0], vec![0.5, 2.0, 2.5, -1.0]];
        let windows = windows_of(&data);
        let s = support_scores(&windows, Pearson, 4).unwrap();
        let sim = Pearson.similarity(&data[0], &data[1]).unwrap();
        assert_eq!(s, vec![sim, sim]);
    }

    #[test]
    fn supports_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let data: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let windows = windows_of(&data);
            for metric in [Pearson, Cosine] {
                let got = support_scores(&windows, metric, 4).unwrap();
                for k in 0..10 {
                    let mut sims: Vec<f64> = (0..10)
                        .filter(|&j| j != k)
                        .map(|j| oracle_similarity(metric, &data[k], &data[j]))
                        .collect();
                    sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    let expected = sims[..4].iter().sum::<f64>() / 4.0;
                    assert!((got[k] - expected).abs() < 1e-12);
                    assert!((-1.0..=1.0).contains(&got[k]));
                }
            }
        }
    }

    #[test]
    fn neighbor_sets_agree_with_single_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let windows = windows_of(&data);
        let all = neighbor_sets(&windows, Cosine, 3).unwrap();
        for k in 0..9 {
            assert_eq!(all[k], retrieve_neighbors(&windows, k, Cosine, 3).unwrap());
        }
    }
}
