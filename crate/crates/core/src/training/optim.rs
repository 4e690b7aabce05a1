// SPDX-License-Identifier: Apache-2.0

use alloc::vec::Vec;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(param_count: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: alloc::vec![0.0; param_count],
            v: alloc::vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (libm::sqrt(v_hat) + self.eps) + self.weight_decay * params[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::new(2, 0.0);
        let mut p = [1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_without_gradient_shrinks() {
        let mut opt = AdamW::new(1, 0.1);
        let mut p = [2.0];
        opt.step(&mut p, &[0.0], 0.5);
        assert!((p[0] - (2.0 - 0.5 * 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = AdamW::new(1, 0.0);
        let mut p = [5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 3.0)];
            opt.step(&mut p, &g, 0.05);
        }
        assert!((p[0] - 3.0).abs() < 1e-3);
    }
}
