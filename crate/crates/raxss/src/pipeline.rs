// SPDX-License-Identifier: Apache-2.0

//! The commands behind the CLI, callable as library functions. Every output
//! is a file under the caller's output directory; dataset directories are
//! only read.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use raxss_core::backbone::PatchMlp;
use raxss_core::dataset::{prepare_split, zscore_normalize, Channel, DatasetSplit, Split};
use raxss_core::explain::{build_report, heatmap_series, verify_monotonicity, ExplanationReport, MonotonicityReport, MONOTONICITY_EPSILON};
use raxss_core::metrics::{evaluate, EvalResult};
use raxss_core::training::{fit, predict_series, EpochRecord, Series};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::io::{load_dataset, write_dataset};
use crate::synth::{generate, SyntheticSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn gen_data(spec: &SyntheticSpec, out: &Path) -> anyhow::Result<Vec<Channel>> {
    let channels = generate(spec)?;
    write_dataset(out, &channels)?;
    Ok(channels)
}

/// Normalized channels with their split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub channels: Vec<Channel>,
    pub split: DatasetSplit,
}

impl PreparedData {
    pub fn load(dataset: &Path, config: &RunConfig) -> anyhow::Result<Self> {
        let raw = load_dataset(dataset)?;
        let channels: Vec<Channel> = raw.iter().map(zscore_normalize).collect();
        let split = prepare_split(&channels, config.fractions, config.split_seed)?;
        Ok(Self { channels, split })
    }

    pub fn channel(&self, id: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.id() == id)
    }

    pub fn channels_in(&self, split: Split) -> Vec<&Channel> {
        self.split.ids(split).iter().filter_map(|id| self.channel(id)).collect()
    }

    /// Fails on a channel too short to yield a window.
    pub fn series(&self, split: Split, config: &RunConfig) -> anyhow::Result<Vec<Series<'_>>> {
        self.channels_in(split)
            .into_iter()
            .map(|c| {
                let s = Series::prepare(c, &config.window, &config.aggregation)?;
                ensure!(
                    !s.is_empty(),
                    "channel `{}` has {} samples, fewer than window_length {}",
                    c.id(),
                    c.len(),
                    config.window.window_length
                );
                Ok(s)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

/// The directory a seed's artifacts go to: `out` itself for a single-seed run,
/// `out/seed-<n>` otherwise.
pub fn seed_dir(out: &Path, seed: u64, n_seeds: usize) -> PathBuf {
    if n_seeds == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed-{seed}"))
    }
}

pub fn train_on(data: &PreparedData, config: &RunConfig, seed: u64) -> anyhow::Result<(Checkpoint, Vec<EpochRecord>, usize)> {
    let train = data.series(Split::Train, config)?;
    let val = data.series(Split::Val, config)?;
    let train_config = config.train_config(seed);
    let model = PatchMlp::init(config.backbone_config(), seed)?;
    let outcome = fit(model, &train, &val, &train_config)?;
    let mut echo = config.clone();
    echo.seeds = vec![seed];
    Ok((Checkpoint::from_model(echo, &outcome.model), outcome.history, outcome.best_epoch))
}

/// Trains one model per configured seed and writes checkpoint, history and
/// config echo for each.
pub fn train(config: &RunConfig, out: &Path) -> anyhow::Result<Vec<TrainRun>> {
    ensure!(!config.seeds.is_empty(), "no training seeds configured");
    let data = PreparedData::load(config.dataset_path()?, config)?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let (checkpoint, history, best_epoch) = train_on(&data, config, seed).with_context(|| format!("training seed {seed}"))?;
        let dir = seed_dir(out, seed, config.seeds.len());
        create_dir(&dir)?;
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        let mut lines = String::new();
        for record in &history {
            writeln!(lines, "{}", serde_json::to_string(record).expect("record serializes")).unwrap();
        }
        write_file(&dir.join(HISTORY_FILE), &lines)?;
        write_file(&dir.join(CONFIG_FILE), &to_json(&checkpoint.config))?;
        runs.push(TrainRun {
            seed,
            dir,
            best_epoch,
            history,
            checkpoint,
        });
    }
    Ok(runs)
}

/// Metrics of a checkpoint on one split. The split is rebuilt from the
/// checkpoint's config, so it matches the one the model was trained with.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, data: &PreparedData, split: Split) -> anyhow::Result<EvalResult> {
    let config = &checkpoint.config;
    let model = checkpoint.model()?;
    let series = data.series(split, config)?;
    ensure!(!series.is_empty(), "{} split is empty", split.as_str());
    let mut probs = Vec::with_capacity(series.len());
    for s in &series {
        probs.push(predict_series(&model, s, &config.aggregation)?.prob_class1());
    }
    let labels: Vec<u8> = series.iter().map(|s| s.label).collect();
    Ok(evaluate(&probs, &labels, config.train.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub f1: f64,
    /// `None` if any seed's AUC was undefined.
    pub auc: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEval {
    pub seed: u64,
    #[serde(flatten)]
    pub result: EvalResult,
}

/// Mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub split: Split,
    pub per_seed: Vec<SeedEval>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize(split: Split, per_seed: Vec<SeedEval>) -> EvalSummary {
    let pick = |f: fn(&EvalResult) -> f64| mean_std(&per_seed.iter().map(|s| f(&s.result)).collect::<Vec<_>>());
    let (f1_mean, f1_std) = pick(|r| r.f1);
    let (acc_mean, acc_std) = pick(|r| r.accuracy);
    let aucs: Option<Vec<f64>> = per_seed.iter().map(|s| s.result.auc).collect();
    let auc = aucs.map(|a| mean_std(&a));
    EvalSummary {
        split,
        mean: MetricSummary {
            f1: f1_mean,
            auc: auc.map(|a| a.0),
            accuracy: acc_mean,
        },
        std: MetricSummary {
            f1: f1_std,
            auc: auc.map(|a| a.1),
            accuracy: acc_std,
        },
        per_seed,
    }
}

/// Knobs that override a checkpoint's config at eval or explain time.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub aggregation: Option<raxss_core::aggregation::AggregationMode>,
    pub metric: Option<raxss_core::retrieval::SimilarityMetric>,
    pub m: Option<usize>,
    pub temperature: Option<f64>,
    pub top_k: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(d) = &self.dataset {
            config.dataset = Some(d.clone());
        }
        if let Some(mode) = self.aggregation {
            config.aggregation.mode = mode;
        }
        if let Some(metric) = self.metric {
            config.aggregation.metric = metric;
        }
        if let Some(m) = self.m {
            config.aggregation.m = m;
        }
        if let Some(t) = self.temperature {
            config.aggregation.temperature = t;
        }
        if let Some(k) = self.top_k {
            config.top_k = k;
        }
    }
}

pub fn load_checkpoint(path: &Path, overrides: &Overrides) -> anyhow::Result<Checkpoint> {
    let mut checkpoint = Checkpoint::load(path)?;
    overrides.apply(&mut checkpoint.config);
    checkpoint.config.aggregation.validate()?;
    Ok(checkpoint)
}

/// Resolves a checkpoint argument that may be the file or its directory.
pub fn checkpoint_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn eval(checkpoint: &Path, split: Split, overrides: &Overrides, out: &Path) -> anyhow::Result<EvalResult> {
    let checkpoint = load_checkpoint(&checkpoint_path(checkpoint), overrides)?;
    let data = PreparedData::load(checkpoint.config.dataset_path()?, &checkpoint.config)?;
    let result = evaluate_checkpoint(&checkpoint, &data, split)?;
    create_dir(out)?;
    write_file(&out.join(EVAL_FILE), &to_json(&result))?;
    Ok(result)
}

/// Evaluates `root/seed-<n>/checkpoint.json` for every seed.
pub fn eval_seeds(root: &Path, seeds: &[u64], split: Split, overrides: &Overrides, out: &Path) -> anyhow::Result<EvalSummary> {
    ensure!(!seeds.is_empty(), "empty seed list");
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let path = root.join(format!("seed-{seed}")).join(CHECKPOINT_FILE);
        let checkpoint = load_checkpoint(&path, overrides)?;
        let data = PreparedData::load(checkpoint.config.dataset_path()?, &checkpoint.config)?;
        let result = evaluate_checkpoint(&checkpoint, &data, split).with_context(|| format!("evaluating seed {seed}"))?;
        per_seed.push(SeedEval { seed, result });
    }
    let summary = summarize(split, per_seed);
    create_dir(out)?;
    write_file(&out.join(EVAL_SUMMARY_FILE), &to_json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutput {
    #[serde(flatten)]
    pub report: ExplanationReport,
    pub monotonicity: MonotonicityReport,
}

/// Channel ids become file names with anything outside `[A-Za-z0-9._-]`
/// replaced by `_`.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

pub fn explain_channel(checkpoint: &Checkpoint, data: &PreparedData, channel_id: &str) -> anyhow::Result<ExplainOutput> {
    let config = &checkpoint.config;
    let Some(channel) = data.channel(channel_id) else {
        let ids: Vec<&str> = data.channels.iter().map(Channel::id).collect();
        bail!("unknown channel id `{channel_id}`; available: {}", ids.join(", "));
    };
    let model = checkpoint.model()?;
    let series = Series::prepare(channel, &config.window, &config.aggregation)?;
    ensure!(!series.is_empty(), "channel `{channel_id}` yields no windows");
    let prediction = predict_series(&model, &series, &config.aggregation)?;
    let report = build_report(
        &prediction,
        &series.neighbor_sets,
        &series.windows,
        &config.window,
        &config.aggregation,
        config.top_k,
        channel.sampling_rate_hz(),
    )?;
    ensure!(
        report.check_additivity(),
        "attributions miss the series probability by {:e}",
        report.additivity_error()
    );
    let monotonicity = verify_monotonicity(&report, MONOTONICITY_EPSILON)?;
    Ok(ExplainOutput { report, monotonicity })
}

pub fn heatmap_csv(checkpoint: &Checkpoint, data: &PreparedData, channel_id: &str) -> anyhow::Result<String> {
    let config = &checkpoint.config;
    let channel = data.channel(channel_id).context("unknown channel id")?;
    let model = checkpoint.model()?;
    let series = Series::prepare(channel, &config.window, &config.aggregation)?;
    let prediction = predict_series(&model, &series, &config.aggregation)?;
    let mut csv = String::from("start,end,prob_class1,weight\n");
    for row in heatmap_series(&prediction, &config.window) {
        writeln!(csv, "{},{},{},{}", row.start, row.end, row.prob_class1, row.weight).unwrap();
    }
    Ok(csv)
}

/// Writes `explain_<id>.json` and `heatmap_<id>.csv`; returns their paths.
pub fn explain(checkpoint: &Path, channel_id: &str, overrides: &Overrides, out: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    let checkpoint = load_checkpoint(&checkpoint_path(checkpoint), overrides)?;
    let data = PreparedData::load(checkpoint.config.dataset_path()?, &checkpoint.config)?;
    let output = explain_channel(&checkpoint, &data, channel_id)?;
    let csv = heatmap_csv(&checkpoint, &data, channel_id)?;
    create_dir(out)?;
    let stem = file_stem(channel_id);
    let json_path = out.join(format!("explain_{stem}.json"));
    let csv_path = out.join(format!("heatmap_{stem}.csv"));
    write_file(&json_path, &to_json(&output))?;
    write_file(&csv_path, &csv)?;
    Ok((json_path, csv_path))
}
