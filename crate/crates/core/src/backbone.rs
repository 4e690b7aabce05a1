// SPDX-License-Identifier: Apache-2.0

//! Window-level classifiers.
//!
//! [`Backbone`] is the interface training and inference are written against.
//! [`PatchMlp`] is the reference implementation: non-overlapping patches are
//! mean-pooled, passed through one tanh hidden layer, and mapped to two logits.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_CLASSES};

/// Class posterior of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPosterior {
    pub probs: [f64; NUM_CLASSES],
    pub logits: [f64; NUM_CLASSES],
}

impl WindowPosterior {
    pub fn from_logits(logits: [f64; NUM_CLASSES]) -> Self {
        Self {
            probs: softmax(logits),
            logits,
        }
    }

    /// Logits are recovered as `ln p` (up to the usual additive constant).
    pub fn from_probs(probs: [f64; NUM_CLASSES]) -> Self {
        Self {
            probs,
            logits: probs.map(libm::log),
        }
    }
}

fn softmax(z: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| libm::exp(v - max));
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

/// A differentiable window classifier over a flat parameter vector.
pub trait Backbone {
    fn input_length(&self) -> usize;

    fn forward(&self, window: &[f64]) -> Result<WindowPosterior>;

    /// Adds `scale * d(grad_probs . probs)/d theta` into `grad`.
    fn accumulate_gradient(
        &self,
        window: &[f64],
        grad_probs: &[f64; NUM_CLASSES],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<()>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Gradient of the loss with respect to every parameter, given the
    /// upstream gradient `d loss / d probs`.
    fn backward(&self, window: &[f64], grad_probs: &[f64; NUM_CLASSES]) -> Result<Vec<f64>> {
        let mut grad = alloc::vec![0.0; self.params().len()];
        self.accumulate_gradient(window, grad_probs, 1.0, &mut grad)?;
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchMlpConfig {
    pub input_length: usize,
    pub patch_size: usize,
    /// Zero gives a linear model from patch features to logits.
    pub hidden_width: usize,
}

impl PatchMlpConfig {
    /// A trailing partial patch is pooled over the samples it has.
    pub fn num_patches(&self) -> usize {
        self.input_length.div_ceil(self.patch_size)
    }

    fn output_fan_in(&self) -> usize {
        if self.hidden_width == 0 {
            self.num_patches()
        } else {
            self.hidden_width
        }
    }

    /// `H * P + H + C * H + C` with a hidden layer, `C * P + C` without.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let p = self.num_patches();
        let h = self.hidden_width;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |name: &'static str, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            layers.push(LayerSpec { name, shape, offset });
            offset += len;
        };
        if h > 0 {
            push("hidden.weight", alloc::vec![h, p]);
            push("hidden.bias", alloc::vec![h]);
        }
        push("output.weight", alloc::vec![NUM_CLASSES, self.output_fan_in()]);
        push("output.bias", alloc::vec![NUM_CLASSES]);
        layers
    }

    fn validate(&self) -> Result<()> {
        if self.input_length == 0 {
            return Err(Error::InvalidWindowConfig("backbone input_length must be >= 1"));
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidWindowConfig("patch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Location of one named array inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayerSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Patch-pooling MLP; `params` is laid out as described by
/// [`PatchMlpConfig::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMlp {
    config: PatchMlpConfig,
    params: Vec<f64>,
}

impl PatchMlp {
    /// Uniform `[-r, r]` with `r = 1 / sqrt(fan_in)` for every layer.
    pub fn init(config: PatchMlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = alloc::vec![0.0; config.param_count()];
        for layer in config.layers() {
            let fan_in = if layer.name.starts_with("hidden") {
                config.num_patches()
            } else {
                config.output_fan_in()
            };
            let r = 1.0 / libm::sqrt(fan_in as f64);
            for v in &mut params[layer.range()] {
                *v = rng.random_range(-r..=r);
            }
        }
        Ok(Self { config, params })
    }

    pub fn zeros(config: PatchMlpConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params: alloc::vec![0.0; config.param_count()],
        })
    }

    pub fn config(&self) -> &PatchMlpConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(name, shape, values)` for every layer, in layout order.
    pub fn arrays(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        self.config
            .layers()
            .into_iter()
            .map(|l| {
                let values = &self.params[l.range()];
                (l.name, l.shape, values)
            })
            .collect()
    }

    /// Rebuilds a model from named arrays; every layer must be present with
    /// the exact length and finite values.
    pub fn from_arrays<'a, F>(config: PatchMlpConfig, mut lookup: F) -> Result<Self>
    where
        F: FnMut(&str) -> Option<&'a [f64]>,
    {
        config.validate()?;
        let mut params = alloc::vec![0.0; config.param_count()];
        for layer in config.layers() {
            let values = lookup(layer.name).unwrap_or(&[]);
            if values.len() != layer.len() {
                return Err(Error::ParamShape {
                    name: String::from(layer.name),
                    expected: layer.len(),
                    actual: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("parameter"));
            }
            params[layer.range()].copy_from_slice(values);
        }
        Ok(Self { config, params })
    }

    fn check_len(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.config.input_length {
            return Err(Error::LengthMismatch {
                expected: self.config.input_length,
                actual: window.len(),
            });
        }
        Ok(())
    }

    fn patch_features(&self, window: &[f64]) -> Vec<f64> {
        window
            .chunks(self.config.patch_size)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Returns `(features, hidden activations, logits)`.
    fn activations(&self, window: &[f64]) -> (Vec<f64>, Vec<f64>, [f64; NUM_CLASSES]) {
        let features = self.patch_features(window);
        let p = features.len();
        let h = self.config.hidden_width;
        let out_w;
        let hidden: Vec<f64>;
        if h > 0 {
            let (w1, rest) = self.params.split_at(h * p);
            let (b1, rest) = rest.split_at(h);
            out_w = rest;
            hidden = (0..h)
                .map(|i| {
                    let a = b1[i] + dot(&w1[i * p..(i + 1) * p], &features);
                    libm::tanh(a)
                })
                .collect();
        } else {
            out_w = &self.params[..];
            hidden = Vec::new();
        }
        let x = if h > 0 { &hidden } else { &features };
        let n = x.len();
        let (w2, b2) = out_w.split_at(NUM_CLASSES * n);
        let logits = core::array::from_fn(|c| b2[c] + dot(&w2[c * n..(c + 1) * n], x));
        (features, hidden, logits)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Backbone for PatchMlp {
    fn input_length(&self) -> usize {
        self.config.input_length
    }

    fn forward(&self, window: &[f64]) -> Result<WindowPosterior> {
        self.check_len(window)?;
        let (_, _, logits) = self.activations(window);
        Ok(WindowPosterior::from_logits(logits))
    }

    fn accumulate_gradient(
        &self,
        window: &[f64],
        grad_probs: &[f64; NUM_CLASSES],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_len(window)?;
        if grad_probs.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("grad_output"));
        }
        if grad.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let (features, hidden, logits) = self.activations(window);
        let probs = softmax(logits);
        // Softmax Jacobian: dz_c = p_c (g_c - sum_j p_j g_j).
        let pg: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
        let gz: [f64; NUM_CLASSES] = core::array::from_fn(|c| scale * probs[c] * (grad_probs[c] - pg));

        let p = features.len();
        let h = self.config.hidden_width;
        let x = if h > 0 { &hidden } else { &features };
        let n = x.len();
        let out_off = if h > 0 { h * p + h } else { 0 };
        let (head, out) = grad.split_at_mut(out_off);
        let (gw2, gb2) = out.split_at_mut(NUM_CLASSES * n);
        for c in 0..NUM_CLASSES {
            gb2[c] += gz[c];
            for i in 0..n {
                gw2[c * n + i] += gz[c] * x[i];
            }
        }
        if h > 0 {
            let w2 = &self.params[out_off..out_off + NUM_CLASSES * n];
            let (gw1, gb1) = head.split_at_mut(h * p);
            for i in 0..h {
                let gh: f64 = (0..NUM_CLASSES).map(|c| gz[c] * w2[c * n + i]).sum();
                let ga = gh * (1.0 - hidden[i] * hidden[i]);
                gb1[i] += ga;
                for j in 0..p {
                    gw1[i * p + j] += ga * features[j];
                }
            }
        }
        Ok(())
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}
