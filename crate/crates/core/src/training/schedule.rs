// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// Linear warmup from `start_lr` to `max_lr`, then half-cosine decay to
/// `final_lr` over `t_max` steps, then constant `final_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmupCosine {
    pub start_lr: f64,
    pub max_lr: f64,
    pub final_lr: f64,
    pub warmup_steps: usize,
    pub t_max: usize,
}

impl Default for WarmupCosine {
    fn default() -> Self {
        Self {
            start_lr: 0.0,
            max_lr: 3e-4,
            final_lr: 1e-6,
            warmup_steps: 100,
            t_max: 700,
        }
    }
}

impl WarmupCosine {
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            let progress = step as f64 / self.warmup_steps as f64;
            return self.start_lr + (self.max_lr - self.start_lr) * progress;
        }
        let decay_step = step - self.warmup_steps;
        if decay_step >= self.t_max {
            return self.final_lr;
        }
        let progress = decay_step as f64 / self.t_max as f64;
        let cosine = 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress));
        self.final_lr + (self.max_lr - self.final_lr) * cosine
    }
}
