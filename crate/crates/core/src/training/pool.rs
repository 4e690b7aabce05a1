// SPDX-License-Identifier: Apache-2.0

use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

/// A window identified by its series position and window position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowRef {
    pub series: usize,
    pub window: usize,
}

/// Windows not yet drawn in the current epoch.
///
/// Drawing uniformly from the pooled windows selects series `i` with
/// probability proportional to its window count, which at a fixed stride is
/// proportional to its length.
#[derive(Debug, Clone)]
pub struct WindowPool {
    remaining: Vec<WindowRef>,
    per_series_total: Vec<usize>,
}

impl WindowPool {
    /// `counts[i]` is the number of windows of series `i`.
    pub fn new(counts: &[usize]) -> Self {
        let remaining = counts
            .iter()
            .enumerate()
            .flat_map(|(series, &n)| (0..n).map(move |window| WindowRef { series, window }))
            .collect();
        Self {
            remaining,
            per_series_total: counts.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_empty(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn per_series_total(&self) -> &[usize] {
        &self.per_series_total
    }

    /// Draws `min(batch_size, len)` windows uniformly without replacement and
    /// removes them from the pool.
    pub fn sample_batch<R: Rng + ?Sized>(&mut self, batch_size: usize, rng: &mut R) -> Result<Vec<WindowRef>> {
        if self.remaining.is_empty() {
            return Err(Error::EmptyPool);
        }
        let n = self.remaining.len();
        let take = batch_size.min(n);
        // Partial Fisher-Yates from the back: the last `take` slots end up as a
        // uniform sample without replacement.
        for i in 0..take {
            let last = n - 1 - i;
            let j = rng.random_range(0..=last);
            self.remaining.swap(j, last);
        }
        Ok(self.remaining.split_off(n - take))
    }
}
