// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use raxss::config::RunConfig;
use raxss::pipeline::{self, Overrides};
use raxss_core::aggregation::AggregationMode;
use raxss_core::dataset::Split;
use raxss_core::retrieval::SimilarityMetric;

#[derive(Parser)]
#[command(name = "raxss", version, about = "Retrieval-weighted window aggregation for variable-length series")]
struct Cli {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest + channel files) to --out.
    GenData(GenDataArgs),
    /// Train one model per seed; writes checkpoint, history and config echo.
    Train(TrainArgs),
    /// Score a checkpoint on a split.
    Eval(EvalArgs),
    /// Attribution report and heatmap CSV for one channel.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n_series: Option<usize>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    rare_pattern_rate: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    pattern_length: Option<usize>,
    #[arg(long)]
    pattern_amplitude: Option<f64>,
}

#[derive(Args, Default)]
struct AggregationArgs {
    #[arg(long)]
    aggregation: Option<AggregationMode>,
    #[arg(long)]
    metric: Option<SimilarityMetric>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated; ignored when --seed is given.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    window_length: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[command(flatten)]
    aggregation: AggregationArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file or directory; with --seeds, the directory holding seed-<n> subdirectories.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Overrides the dataset path stored in the checkpoint.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    aggregation: AggregationArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    channel: String,
    #[arg(long)]
    top_k: Option<usize>,
    #[command(flatten)]
    aggregation: AggregationArgs,
}

fn base_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn overrides(dataset: Option<PathBuf>, agg: AggregationArgs, top_k: Option<usize>) -> Overrides {
    Overrides {
        dataset,
        aggregation: agg.aggregation,
        metric: agg.metric,
        m: agg.m,
        temperature: agg.temperature,
        top_k,
    }
}

/// `--out`, the config's `out`, or the checkpoint's directory, in that order.
fn out_dir(cli_out: Option<PathBuf>, config: &RunConfig, checkpoint: Option<&std::path::Path>) -> anyhow::Result<PathBuf> {
    if let Some(out) = cli_out.or_else(|| config.out.clone()) {
        return Ok(out);
    }
    let ck = checkpoint.context("no output directory (pass --out)")?;
    let dir = if ck.is_dir() { ck } else { ck.parent().unwrap_or(std::path::Path::new(".")) };
    Ok(dir.to_path_buf())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = base_config(&cli)?;
    let Cli { seed, out, command, .. } = cli;
    match command {
        Command::GenData(a) => {
            let spec = &mut config.synthetic;
            if let Some(v) = a.n_series {
                spec.n_series = v;
            }
            if let Some(v) = a.min_length {
                spec.length_range.0 = v;
            }
            if let Some(v) = a.max_length {
                spec.length_range.1 = v;
            }
            if let Some(v) = a.rare_pattern_rate {
                spec.rare_pattern_rate = v;
            }
            if let Some(v) = a.noise_sigma {
                spec.noise_sigma = v;
            }
            if let Some(v) = a.pattern_length {
                spec.pattern_length = v;
            }
            if let Some(v) = a.pattern_amplitude {
                spec.pattern_amplitude = v;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let out = out.or(config.dataset.clone()).context("no output directory (pass --out)")?;
            let channels = pipeline::gen_data(&config.synthetic, &out)?;
            eprintln!("wrote {} channels to {}", channels.len(), out.display());
        }
        Command::Train(a) => {
            if let Some(d) = a.dataset {
                config.dataset = Some(d);
            }
            if let Some(s) = seed {
                config.seeds = vec![s];
            } else if let Some(s) = a.seeds {
                config.seeds = s;
            }
            macro_rules! set {
                ($($field:expr => $value:expr),* $(,)?) => {
                    $(if let Some(v) = $value { $field = v; })*
                };
            }
            set! {
                config.split_seed => a.split_seed,
                config.window.window_length => a.window_length,
                config.window.stride => a.stride,
                config.train.epochs => a.epochs,
                config.train.batch_size => a.batch_size,
                config.train.schedule.max_lr => a.max_lr,
                config.train.schedule.warmup_steps => a.warmup_steps,
                config.train.schedule.t_max => a.t_max,
                config.train.weight_decay => a.weight_decay,
                config.train.patience => a.patience,
                config.backbone.patch_size => a.patch_size,
                config.backbone.hidden_width => a.hidden_width,
            }
            overrides(None, a.aggregation, None).apply(&mut config);
            let out = out_dir(out, &config, None)?;
            config.out = Some(out.clone());
            for run in pipeline::train(&config, &out)? {
                eprintln!(
                    "seed {}: best epoch {} of {}, artifacts in {}",
                    run.seed,
                    run.best_epoch,
                    run.history.len(),
                    run.dir.display()
                );
            }
        }
        Command::Eval(a) => {
            let ov = overrides(a.dataset, a.aggregation, None);
            let out = out_dir(out, &config, Some(&a.checkpoint))?;
            match a.seeds {
                Some(seeds) => {
                    let summary = pipeline::eval_seeds(&a.checkpoint, &seeds, a.split, &ov, &out)?;
                    println!("{}", serde_json::to_string_pretty(&summary)?);
                }
                None => {
                    let result = pipeline::eval(&a.checkpoint, a.split, &ov, &out)?;
                    println!("{}", serde_json::to_string_pretty(&result)?);
                }
            }
        }
        Command::Explain(a) => {
            let ov = overrides(a.dataset, a.aggregation, a.top_k);
            let out = out_dir(out, &config, Some(&a.checkpoint))?;
            let (json, csv) = pipeline::explain(&a.checkpoint, &a.channel, &ov, &out)?;
            eprintln!("wrote {} and {}", json.display(), csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
