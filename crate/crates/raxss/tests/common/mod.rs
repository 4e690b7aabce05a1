// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn raxss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raxss")).args(args).output().expect("binary runs")
}

pub fn raxss_ok(args: &[&str]) -> Output {
    let out = raxss(args);
    assert!(
        out.status.success(),
        "raxss {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small dataset: 16 series of 300-500 samples.
pub fn toy_dataset(dir: &Path, seed: u64) {
    raxss_ok(&[
        "gen-data",
        "--out",
        p(dir),
        "--seed",
        &seed.to_string(),
        "--n-series",
        "16",
        "--min-length",
        "300",
        "--max-length",
        "500",
        "--rare-pattern-rate",
        "0.2",
        "--pattern-length",
        "16",
    ]);
}

/// Fast training flags for the toy dataset.
pub const TOY_TRAIN: &[&str] = &[
    "--window-length",
    "64",
    "--stride",
    "16",
    "--m",
    "3",
    "--batch-size",
    "32",
    "--max-lr",
    "1e-2",
    "--warmup-steps",
    "5",
    "--t-max",
    "100",
    "--patch-size",
    "8",
    "--hidden-width",
    "4",
];
