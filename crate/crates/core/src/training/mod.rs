// SPDX-License-Identifier: Apache-2.0

//! The sparse-sampling training loop with retrieval-weighted aggregation.
//!
//! Supports depend only on raw window similarities, never on the backbone
//! parameters, so they are computed once per series up front and the weights
//! are constants during backpropagation: `d p_hat / d theta = sum_k alpha_k
//! d p_k / d theta`.

mod optim;
mod pool;
mod schedule;

pub use optim::AdamW;
pub use pool::{WindowPool, WindowRef};
pub use schedule::WarmupCosine;

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, AggregationConfig, SeriesPrediction};
use crate::backbone::Backbone;
use crate::dataset::{extract_windows, Channel, Window, WindowConfig};
use crate::metrics::{evaluate, DEFAULT_THRESHOLD};
use crate::retrieval::{neighbor_sets, NeighborSet};
use crate::{Error, Result};

/// A channel cut into windows, with the retrieval results over its full
/// window set.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub id: &'a str,
    pub label: u8,
    pub windows: Vec<Window<'a>>,
    pub neighbor_sets: Vec<NeighborSet>,
    pub supports: Vec<f64>,
}

impl<'a> Series<'a> {
    /// A channel shorter than the window yields a series with no windows.
    pub fn prepare(channel: &'a Channel, window: &WindowConfig, aggregation: &AggregationConfig) -> Result<Self> {
        window.validate()?;
        let windows = extract_windows(channel, window);
        Self::from_windows(channel.id(), channel.label(), windows, aggregation)
    }

    pub fn from_windows(
        id: &'a str,
        label: u8,
        windows: Vec<Window<'a>>,
        aggregation: &AggregationConfig,
    ) -> Result<Self> {
        let neighbor_sets = neighbor_sets(&windows, aggregation.metric, aggregation.m)?;
        let supports = neighbor_sets.iter().map(|n| n.mean_support).collect();
        Ok(Self {
            id,
            label,
            windows,
            neighbor_sets,
            supports,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: WarmupCosine,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub threshold: f64,
    pub aggregation: AggregationConfig,
    pub window: WindowConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8192,
            schedule: WarmupCosine::default(),
            weight_decay: 1e-6,
            patience: 5,
            seed: 69421,
            threshold: DEFAULT_THRESHOLD,
            aggregation: AggregationConfig::default(),
            window: WindowConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig("batch_size must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::InvalidTrainConfig("patience must be >= 1"));
        }
        let s = &self.schedule;
        if [s.start_lr, s.max_lr, s.final_lr].iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(Error::InvalidTrainConfig("learning rates must be finite and >= 0"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidTrainConfig("weight_decay must be >= 0"));
        }
        self.aggregation.validate()?;
        self.window.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub series_in_batch: usize,
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_mean: f64,
    pub val_f1: f64,
    pub val_auc: Option<f64>,
    pub val_acc: f64,
    pub lr_last: f64,
}

const PROB_CLAMP: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy on a class-1 probability, clamped to
/// `[1e-12, 1 - 1e-12]` before the log.
pub fn bce(p1: f64, label: u8) -> f64 {
    let p = clamp_prob(p1);
    if label == 1 {
        -libm::log(p)
    } else {
        -libm::log(1.0 - p)
    }
}

/// `d bce / d p1`, evaluated at the clamped probability.
pub fn bce_grad(p1: f64, label: u8) -> f64 {
    let p = clamp_prob(p1);
    if label == 1 {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

pub fn bce_loss(prediction: &SeriesPrediction, label: u8) -> f64 {
    bce(prediction.prob_class1(), label)
}

/// Forwards every window of the series and aggregates with supports over the
/// full window set. No sampling.
pub fn predict_series<B: Backbone + ?Sized>(
    model: &B,
    series: &Series<'_>,
    aggregation: &AggregationConfig,
) -> Result<SeriesPrediction> {
    if series.is_empty() {
        return Err(Error::NoWindows(series.id.into()));
    }
    let posteriors = series
        .windows
        .iter()
        .map(|w| model.forward(w.values))
        .collect::<Result<Vec<_>>>()?;
    aggregate(
        series.id,
        series.windows.iter().map(|w| w.window_index).collect(),
        posteriors,
        series.supports.clone(),
        aggregation,
    )
}

/// Windows the channel, runs retrieval and predicts.
pub fn predict_channel<B: Backbone + ?Sized>(
    model: &B,
    channel: &Channel,
    window: &WindowConfig,
    aggregation: &AggregationConfig,
) -> Result<SeriesPrediction> {
    let series = Series::prepare(channel, window, aggregation)?;
    predict_series(model, &series, aggregation)
}

/// Owns the optimizer state and the global step counter across epochs.
#[derive(Debug, Clone)]
pub struct Trainer<'c> {
    config: &'c TrainConfig,
    optimizer: AdamW,
    step: usize,
    last_lr: f64,
}

impl<'c> Trainer<'c> {
    pub fn new<B: Backbone + ?Sized>(model: &B, config: &'c TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            optimizer: AdamW::new(model.params().len(), config.weight_decay),
            step: 0,
            last_lr: config.schedule.lr(0),
        })
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn last_lr(&self) -> f64 {
        self.last_lr
    }

    /// One pass over a freshly built pool of every window of `series`.
    ///
    /// Each batch groups its sampled windows by series, aggregates each
    /// present series over its sampled windows, averages the BCE over the
    /// present series and takes one optimizer step. `epoch` selects the RNG
    /// stream, so a fixed seed reproduces the whole run.
    pub fn train_epoch<B: Backbone + ?Sized>(
        &mut self,
        model: &mut B,
        series: &[Series<'_>],
        epoch: usize,
    ) -> Result<Vec<LossRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let counts: Vec<usize> = series.iter().map(|s| s.len()).collect();
        let mut pool = WindowPool::new(&counts);
        let mut records = Vec::new();
        let mut grad = alloc::vec![0.0; model.params().len()];
        let mut batch = 0;
        while !pool.is_empty() {
            let mut sampled = pool.sample_batch(self.config.batch_size, &mut rng)?;
            sampled.sort_unstable();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = self
                .batch_loss_and_grad(model, series, &sampled, &mut grad)
                .map_err(|e| Error::Batch {
                    epoch,
                    batch,
                    source: Box::new(e),
                })?;
            let lr = self.config.schedule.lr(self.step);
            self.optimizer.step(model.params_mut(), &grad, lr);
            self.step += 1;
            self.last_lr = lr;
            records.push(LossRecord {
                epoch,
                batch,
                loss: loss.0,
                series_in_batch: loss.1,
            });
            batch += 1;
        }
        Ok(records)
    }

    /// Returns `(mean loss over present series, number of present series)` and
    /// fills `grad` with the gradient of that mean.
    fn batch_loss_and_grad<B: Backbone + ?Sized>(
        &self,
        model: &B,
        series: &[Series<'_>],
        sampled: &[WindowRef],
        grad: &mut [f64],
    ) -> Result<(f64, usize)> {
        let groups: Vec<&[WindowRef]> = sampled.chunk_by(|a, b| a.series == b.series).collect();
        let present = groups.len() as f64;
        let mut total = 0.0;
        for group in &groups {
            let s = &series[group[0].series];
            let windows: Vec<&Window<'_>> = group.iter().map(|r| &s.windows[r.window]).collect();
            let posteriors = windows
                .iter()
                .map(|w| model.forward(w.values))
                .collect::<Result<Vec<_>>>()?;
            let prediction = aggregate(
                s.id,
                windows.iter().map(|w| w.window_index).collect(),
                posteriors,
                group.iter().map(|r| s.supports[r.window]).collect(),
                &self.config.aggregation,
            )?;
            total += bce_loss(&prediction, s.label);
            let upstream = bce_grad(prediction.prob_class1(), s.label) / present;
            for (w, alpha) in windows.iter().zip(&prediction.weights.alphas) {
                model.accumulate_gradient(w.values, &[0.0, upstream], *alpha, grad)?;
            }
        }
        Ok((total / present, groups.len()))
    }
}

/// Series-level validation metrics for a model.
pub fn evaluate_series<B: Backbone + ?Sized>(
    model: &B,
    series: &[Series<'_>],
    aggregation: &AggregationConfig,
    threshold: f64,
) -> Result<crate::metrics::EvalResult> {
    let mut probs = Vec::with_capacity(series.len());
    for s in series {
        probs.push(predict_series(model, s, aggregation)?.prob_class1());
    }
    let labels: Vec<u8> = series.iter().map(|s| s.label).collect();
    Ok(evaluate(&probs, &labels, threshold))
}

#[derive(Debug, Clone)]
pub struct FitOutcome<B> {
    pub model: B,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Trains for up to `config.epochs` epochs, keeping the parameters of the
/// epoch with the best validation `(F1, accuracy)` and stopping after
/// `patience` epochs without improvement.
pub fn fit<B: Backbone + Clone>(
    mut model: B,
    train: &[Series<'_>],
    val: &[Series<'_>],
    config: &TrainConfig,
) -> Result<FitOutcome<B>> {
    if train.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidTrainConfig("training set has no windows"));
    }
    if val.is_empty() {
        return Err(Error::InvalidTrainConfig("validation set is empty"));
    }
    let mut trainer = Trainer::new(&model, config)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let losses = trainer.train_epoch(&mut model, train, epoch)?;
        let train_loss_mean = losses.iter().map(|r| r.loss).sum::<f64>() / losses.len() as f64;
        let eval = evaluate_series(&model, val, &config.aggregation, config.threshold)?;
        history.push(EpochRecord {
            epoch,
            train_loss_mean,
            val_f1: eval.f1,
            val_auc: eval.auc,
            val_acc: eval.accuracy,
            lr_last: trainer.last_lr(),
        });
        let score = (eval.f1, eval.accuracy);
        let improved = match best {
            None => true,
            Some(b) => score.0 > b.0 || (score.0 == b.0 && score.1 > b.1),
        };
        if improved {
            best = Some(score);
            best_model = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(FitOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{PatchMlp, PatchMlpConfig};
    use crate::retrieval::SimilarityMetric;
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;
    use rand::Rng;

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            schedule: WarmupCosine {
                start_lr: 0.0,
                max_lr: 1e-2,
                final_lr: 1e-4,
                warmup_steps: 2,
                t_max: 20,
            },
            aggregation: AggregationConfig {
                m: 2,
                ..Default::default()
            },
            window: WindowConfig::new(8, 4).unwrap(),
            ..Default::default()
        }
    }

    fn mlp(seed: u64) -> PatchMlp {
        PatchMlp::init(
            PatchMlpConfig {
                input_length: 8,
                patch_size: 2,
                hidden_width: 3,
            },
            seed,
        )
        .unwrap()
    }

    fn toy_channels(n: usize, seed: u64) -> Vec<Channel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = (i % 2) as i64;
                let len = rng.random_range(12..40);
                let values = (0..len)
                    .map(|_| rng.random_range(-1.0..1.0) + label as f64 * 1.5)
                    .collect();
                Channel::new(format!("c{i}"), values, label).unwrap()
            })
            .collect()
    }

    fn prepare<'a>(channels: &'a [Channel], config: &TrainConfig) -> Vec<Series<'a>> {
        channels
            .iter()
            .map(|c| Series::prepare(c, &config.window, &config.aggregation).unwrap())
            .collect()
    }

    #[test]
    fn bce_examples() {
        assert!((bce(0.5, 1) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(1.0 - 1e-12, 1) < 2e-12);
        assert!(bce(0.0, 1).is_finite());
        assert_eq!(bce_grad(0.5, 1), -2.0);
        assert_eq!(bce_grad(0.5, 0), 2.0);
    }

    #[test]
    fn single_series_single_batch() {
        let channel = Channel::new("s", (0..16).map(|v| v as f64).collect(), 1).unwrap();
        let config = TrainConfig {
            batch_size: 3,
            ..small_config()
        };
        let series = vec![Series::prepare(&channel, &config.window, &config.aggregation).unwrap()];
        assert_eq!(series[0].len(), 3);
        let mut model = PatchMlp::zeros(*mlp(0).config()).unwrap();
        let mut trainer = Trainer::new(&model, &config).unwrap();
        let records = trainer.train_epoch(&mut model, &series, 1).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].series_in_batch, 1);
        assert!((records[0].loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_model_first_batch_is_ln2() {
        let channels = toy_channels(6, 3);
        let config = small_config();
        let series = prepare(&channels, &config);
        let mut model = PatchMlp::zeros(*mlp(0).config()).unwrap();
        let mut trainer = Trainer::new(&model, &config).unwrap();
        let records = trainer.train_epoch(&mut model, &series, 1).unwrap();
        assert!((records[0].loss - core::f64::consts::LN_2).abs() < 1e-15);
        let total: usize = series.iter().map(|s| s.len()).sum();
        assert_eq!(records.len(), total.div_ceil(config.batch_size));
    }

    #[test]
    fn epoch_is_bitwise_reproducible() {
        let channels = toy_channels(6, 4);
        let config = small_config();
        let series = prepare(&channels, &config);
        let run = || {
            let mut model = mlp(9);
            let mut trainer = Trainer::new(&model, &config).unwrap();
            let losses = trainer.train_epoch(&mut model, &series, 1).unwrap();
            (model, losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn batch_loss_is_mean_over_present_series() {
        let channels = toy_channels(5, 6);
        let config = TrainConfig {
            batch_size: 7,
            ..small_config()
        };
        let series = prepare(&channels, &config);
        let model = mlp(2);
        let trainer = Trainer::new(&model, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pool = WindowPool::new(&series.iter().map(|s| s.len()).collect::<Vec<_>>());
        while !pool.is_empty() {
            let mut sampled = pool.sample_batch(7, &mut rng).unwrap();
            sampled.sort_unstable();
            let mut grad = vec![0.0; model.param_count()];
            let (loss, present) = trainer.batch_loss_and_grad(&model, &series, &sampled, &mut grad).unwrap();
            // scalar recomputation straight from the formulas
            let mut per_series = Vec::new();
            for (i, s) in series.iter().enumerate() {
                let ks: Vec<usize> = sampled.iter().filter(|r| r.series == i).map(|r| r.window).collect();
                if ks.is_empty() {
                    continue;
                }
                let exps: Vec<f64> = ks.iter().map(|&k| libm::exp(s.supports[k])).collect();
                let z: f64 = exps.iter().sum();
                let p1: f64 = ks
                    .iter()
                    .zip(&exps)
                    .map(|(&k, e)| e / z * model.forward(s.windows[k].values).unwrap().probs[1])
                    .sum();
                let y = s.label as f64;
                per_series.push(-(y * libm::log(p1) + (1.0 - y) * libm::log(1.0 - p1)));
            }
            assert_eq!(present, per_series.len());
            let expected = per_series.iter().sum::<f64>() / per_series.len() as f64;
            assert!((loss - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let channels = toy_channels(4, 8);
        let config = TrainConfig {
            batch_size: 6,
            ..small_config()
        };
        let series = prepare(&channels, &config);
        let mut model = mlp(5);
        let trainer = Trainer::new(&model, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pool = WindowPool::new(&series.iter().map(|s| s.len()).collect::<Vec<_>>());
        let mut sampled = pool.sample_batch(6, &mut rng).unwrap();
        sampled.sort_unstable();
        let mut grad = vec![0.0; model.param_count()];
        trainer.batch_loss_and_grad(&model, &series, &sampled, &mut grad).unwrap();
        let h = 1e-6;
        for i in 0..model.param_count() {
            let orig = model.params()[i];
            let mut scratch = vec![0.0; grad.len()];
            model.params_mut()[i] = orig + h;
            let up = trainer.batch_loss_and_grad(&model, &series, &sampled, &mut scratch).unwrap().0;
            model.params_mut()[i] = orig - h;
            let down = trainer.batch_loss_and_grad(&model, &series, &sampled, &mut scratch).unwrap().0;
            model.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-6);
            assert!((grad[i] - fd).abs() / denom < 1e-4, "param {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn fit_stops_when_validation_never_improves() {
        let channels = toy_channels(8, 10);
        let mut config = small_config();
        config.patience = 1;
        config.epochs = 10;
        config.schedule = WarmupCosine {
            start_lr: 0.0,
            max_lr: 0.0,
            final_lr: 0.0,
            warmup_steps: 0,
            t_max: 0,
        };
        config.weight_decay = 0.0;
        let series = prepare(&channels, &config);
        let (train, val) = series.split_at(6);
        let model = mlp(1);
        let out = fit(model.clone(), train, val, &config).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.model, model);
    }

    #[test]
    fn fit_learns_separable_toy() {
        let channels = toy_channels(12, 11);
        let mut config = small_config();
        config.epochs = 200;
        config.patience = 200;
        config.schedule = WarmupCosine {
            start_lr: 0.0,
            max_lr: 2e-2,
            final_lr: 1e-3,
            warmup_steps: 10,
            t_max: 2000,
        };
        let series = prepare(&channels, &config);
        let (train, val) = series.split_at(10);
        let model = mlp(3);
        let mut trainer = Trainer::new(&model, &config).unwrap();
        let mut m = model.clone();
        let mut last = f64::INFINITY;
        for epoch in 1..=200 {
            let losses = trainer.train_epoch(&mut m, train, epoch).unwrap();
            last = losses.iter().map(|r| r.loss).sum::<f64>() / losses.len() as f64;
            if last < 0.1 {
                break;
            }
        }
        assert!(last < 0.1, "loss {last}");
        let eval = evaluate_series(&m, val, &config.aggregation, 0.5).unwrap();
        assert_eq!(eval.accuracy, 1.0);
    }

    #[test]
    fn predict_series_manual_chain() {
        let channels = toy_channels(3, 12);
        let config = small_config();
        let model = mlp(4);
        for c in &channels {
            let pred = predict_channel(&model, c, &config.window, &config.aggregation).unwrap();
            let windows = extract_windows(c, &config.window);
            // supports by hand: top-2 Pearson neighbors
            let mut supports = Vec::new();
            for a in &windows {
                let mut sims: Vec<f64> = windows
                    .iter()
                    .filter(|b| b.window_index != a.window_index)
                    .map(|b| SimilarityMetric::Pearson.similarity(a.values, b.values).unwrap())
                    .collect();
                sims.sort_by(|x, y| y.partial_cmp(x).unwrap());
                let m = sims.len().min(2);
                supports.push(if m == 0 { 0.0 } else { sims[..m].iter().sum::<f64>() / m as f64 });
            }
            let exps: Vec<f64> = supports.iter().map(|s| libm::exp(*s)).collect();
            let z: f64 = exps.iter().sum();
            let mut p = [0.0; 2];
            for (w, e) in windows.iter().zip(&exps) {
                let post = model.forward(w.values).unwrap();
                p[0] += e / z * post.probs[0];
                p[1] += e / z * post.probs[1];
            }
            assert!((p[0] - pred.probs[0]).abs() < 1e-12);
            assert!((p[1] - pred.probs[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_is_order_invariant() {
        let channels = toy_channels(4, 13);
        let config = small_config();
        let model = mlp(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in &channels {
            let base = predict_channel(&model, c, &config.window, &config.aggregation).unwrap();
            let mut windows = extract_windows(c, &config.window);
            rand::seq::SliceRandom::shuffle(windows.as_mut_slice(), &mut rng);
            let shuffled = Series::from_windows(c.id(), c.label(), windows, &config.aggregation).unwrap();
            let pred = predict_series(&model, &shuffled, &config.aggregation).unwrap();
            for k in 0..2 {
                assert!((pred.probs[k] - base.probs[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_window_prediction_is_the_posterior() {
        let c = Channel::new("one", (0..8).map(|v| v as f64).collect(), 0).unwrap();
        let config = small_config();
        let model = mlp(7);
        let pred = predict_channel(&model, &c, &config.window, &config.aggregation).unwrap();
        assert_eq!(pred.probs, model.forward(c.values()).unwrap().probs);
    }

    #[test]
    fn short_channel_has_no_windows() {
        let c = Channel::new("short", vec![0.0; 5], 0).unwrap();
        let config = small_config();
        let err = predict_channel(&mlp(0), &c, &config.window, &config.aggregation).unwrap_err();
        assert_eq!(err, Error::NoWindows(String::from("short")));
    }
}
