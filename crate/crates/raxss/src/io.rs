// SPDX-License-Identifier: Apache-2.0

//! Dataset directories.
//!
//! ```text
//! root/
//!   manifest.json   [{"id": "...", "file": "a.txt", "label": 0, "split": "train"}, ...]
//!   a.txt           one decimal sample per line, no header
//! ```
//!
//! `split` and `sampling_rate_hz` are optional.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use raxss_core::dataset::{Channel, Split};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    MissingManifest(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: malformed manifest: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: record {record} (`{id}`): label {label} is not 0 or 1")]
    Label {
        path: PathBuf,
        record: usize,
        id: String,
        label: i64,
    },
    #[error("{path}: record {record} (`{id}`): unknown split `{split}`")]
    UnknownSplit {
        path: PathBuf,
        record: usize,
        id: String,
        split: String,
    },
    #[error("{path}: record {record}: duplicate channel id `{id}` (first seen in record {first})")]
    DuplicateId {
        path: PathBuf,
        record: usize,
        first: usize,
        id: String,
    },
    #[error("{path}: record {record} (`{id}`) references missing channel file {file}")]
    MissingChannelFile {
        path: PathBuf,
        record: usize,
        id: String,
        file: PathBuf,
    },
    #[error("{path}:{line}: malformed sample `{token}`")]
    Sample {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}: channel file holds no samples")]
    EmptyChannel { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub file: String,
    pub label: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_rate_hz: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestRecord>, DatasetError> {
    let path = root.join(MANIFEST);
    if !path.is_file() {
        return Err(DatasetError::MissingManifest(path));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
        path,
    })
}

/// Parses one sample per line; finite decimals only.
pub fn parse_channel_file(path: &Path) -> Result<Vec<f64>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let token = line.trim();
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(DatasetError::Sample {
                    path: path.to_path_buf(),
                    line: i + 1,
                    token: token.to_string(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(DatasetError::EmptyChannel {
            path: path.to_path_buf(),
        });
    }
    Ok(values)
}

/// Loads every channel listed in the manifest with raw (unnormalized) values.
pub fn load_dataset(root: &Path) -> Result<Vec<Channel>, DatasetError> {
    let manifest_path = root.join(MANIFEST);
    let records = read_manifest(root)?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut channels = Vec::with_capacity(records.len());
    for (record, r) in records.iter().enumerate() {
        if let Some(&first) = seen.get(r.id.as_str()) {
            return Err(DatasetError::DuplicateId {
                path: manifest_path,
                record,
                first,
                id: r.id.clone(),
            });
        }
        seen.insert(&r.id, record);
        if r.label != 0 && r.label != 1 {
            return Err(DatasetError::Label {
                path: manifest_path,
                record,
                id: r.id.clone(),
                label: r.label,
            });
        }
        let split = match r.split.as_deref() {
            None => None,
            Some(s) => Some(s.parse::<Split>().map_err(|_| DatasetError::UnknownSplit {
                path: manifest_path.clone(),
                record,
                id: r.id.clone(),
                split: s.to_string(),
            })?),
        };
        let file = root.join(&r.file);
        if !file.is_file() {
            return Err(DatasetError::MissingChannelFile {
                path: manifest_path,
                record,
                id: r.id.clone(),
                file,
            });
        }
        let values = parse_channel_file(&file)?;
        // Label and finiteness are already checked, so construction cannot fail.
        let channel = Channel::new(r.id.clone(), values, r.label)
            .expect("validated channel")
            .with_split(split)
            .with_sampling_rate(r.sampling_rate_hz);
        channels.push(channel);
    }
    Ok(channels)
}

/// Writes `channels` as `<id>.txt` files plus a manifest. Samples use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset(root: &Path, channels: &[Channel]) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut records = Vec::with_capacity(channels.len());
    for c in channels {
        let file = format!("{}.txt", c.id());
        let path = root.join(&file);
        let mut out = String::with_capacity(c.len() * 8);
        for v in c.values() {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        fs::write(&path, out).map_err(io_err(&path))?;
        records.push(ManifestRecord {
            id: c.id().to_string(),
            file,
            label: c.label() as i64,
            split: c.split().map(|s| s.as_str().to_string()),
            sampling_rate_hz: c.sampling_rate_hz(),
        });
    }
    let path = root.join(MANIFEST);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    let json = serde_json::to_string_pretty(&records).expect("manifest serializes");
    f.write_all(json.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(io_err(&path))?;
    Ok(())
}
