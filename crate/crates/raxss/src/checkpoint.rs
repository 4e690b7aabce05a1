// SPDX-License-Identifier: Apache-2.0

//! Backbone checkpoints:
//! `{"config": RunConfig, "arrays": {name: [..]}, "shapes": {name: [..]}}`.
//!
//! Floats are written in shortest round-trip form, so loading reproduces every
//! parameter bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use raxss_core::backbone::PatchMlp;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub shapes: BTreeMap<String, Vec<usize>>,
}

impl Checkpoint {
    pub fn from_model(config: RunConfig, model: &PatchMlp) -> Self {
        let mut arrays = BTreeMap::new();
        let mut shapes = BTreeMap::new();
        for (name, shape, values) in model.arrays() {
            arrays.insert(name.to_string(), values.to_vec());
            shapes.insert(name.to_string(), shape);
        }
        Self { config, arrays, shapes }
    }

    pub fn model(&self) -> anyhow::Result<PatchMlp> {
        let backbone = self.config.backbone_config();
        for layer in backbone.layers() {
            match self.shapes.get(layer.name) {
                Some(shape) if *shape == layer.shape => {}
                Some(shape) => bail!("checkpoint shape for `{}` is {:?}, config implies {:?}", layer.name, shape, layer.shape),
                None => bail!("checkpoint has no array `{}`", layer.name),
            }
        }
        Ok(PatchMlp::from_arrays(backbone, |name| self.arrays.get(name).map(Vec::as_slice))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
    }
}
