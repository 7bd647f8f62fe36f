//! The experiment manifest: one TOML file, every section optional.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mixrec::data::{ColumnMapping, MovieLensConfig, RecsysConfig, SyntheticConfig};
use mixrec::embeddings::CbowConfig;
use mixrec::mdn::ScorerKind;
use mixrec::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Movielens,
    Recsys,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Raw interaction log; unused for synthetic data.
    pub path: Option<PathBuf>,
    /// Overrides the column layout of the raw log.
    pub columns: Option<ColumnMapping>,
    pub movielens: MovieLensConfig,
    pub recsys: RecsysConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Movielens,
            path: None,
            columns: None,
            movielens: MovieLensConfig::default(),
            recsys: RecsysConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Architecture settings shared by every model name; the item dimension
/// always comes from the embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Model names such as `RNN-ATT-RNN-4`, plus `RVI` and `Item-CF` for
    /// evaluation.
    pub models: Vec<String>,
    pub d_hidden: usize,
    pub init_scale: f64,
    pub scorer: ScorerKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            models: vec!["RNN-ATT-RNN-4".into()],
            d_hidden: 256,
            init_scale: 0.08,
            scorer: ScorerKind::Dot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub cutoffs: Vec<usize>,
    pub exclude_history: bool,
    pub threads: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            cutoffs: vec![10, 20],
            exclude_history: false,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSection,
    pub embedding: CbowConfig,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            dataset: DatasetSection::default(),
            embedding: CbowConfig::default(),
            model: ModelSection::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &cfg.dataset.path {
            cfg.dataset.path = Some(base.join(p));
        }
        cfg.out = base.join(&cfg.out);
        Ok(cfg)
    }

    /// Pushes the top-level seed into every section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.movielens.seed = seed;
        self.dataset.recsys.seed = seed;
        self.dataset.synthetic.seed = seed;
        self.embedding.seed = seed;
        self.training.seed = seed;
        self
    }

    pub fn check_paths(&self) -> Result<()> {
        if self.dataset.kind != DatasetKind::Synthetic {
            match &self.dataset.path {
                Some(p) if !p.exists() => bail!("dataset path {} does not exist", p.display()),
                _ => {}
            }
        }
        if self.evaluation.cutoffs.is_empty() || self.evaluation.cutoffs.contains(&0) {
            bail!("evaluation cutoffs must be a non-empty list of positive integers");
        }
        Ok(())
    }
}
