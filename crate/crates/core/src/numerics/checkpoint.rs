use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mixrec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Storage precision for parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F64 => v,
            Precision::F32 => v as f32 as f64,
        }
    }

    /// Rounds every parameter to this precision in place.
    pub fn apply(self, params: &mut ParamStore) {
        if self == Precision::F64 {
            return;
        }
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            for v in params.get_mut(id).data_mut() {
                *v = self.round(*v);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// JSON container mapping parameter names to shapes and flat values.
///
/// `f32` checkpoints store values already rounded to single precision, so
/// both precisions round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub params: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn from_params(params: &ParamStore, precision: Precision) -> Self {
        let params = params
            .iter()
            .map(|(_, name, t)| CheckpointEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|&v| precision.round(v)).collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            precision,
            metadata: BTreeMap::new(),
            params,
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn to_params(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for entry in &self.params {
            let t = Tensor::new(entry.shape.clone(), entry.values.clone())?;
            store.insert(entry.name.clone(), t)?;
        }
        Ok(store)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint: format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.precision == Precision::F32 {
            let lossy = ckpt
                .params
                .iter()
                .flat_map(|e| &e.values)
                .any(|&v| Precision::F32.round(v).to_bits() != v.to_bits());
            if lossy {
                return Err(Error::Config("f32 checkpoint holds values outside single precision".into()));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
