use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codeast::ExtractionLimits;
use crate::evalkit::{MapVariant, SplitMode};
use crate::imbalance::ResampleKind;
use crate::neural::{Activation, LossSpec, TrainConfig};
use crate::textprep::{load_stopwords, PreprocessConfig};
use crate::wordvec::VectorFormat;
use crate::{Error, Result};

/// Class-imbalance handling for one combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Original,
    Ros,
    Rus,
    /// Weighted cross-entropy with balanced class weights.
    Wbe,
    Focal,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Self::Original, Self::Ros, Self::Rus, Self::Wbe, Self::Focal];

    pub fn resample_kind(self) -> ResampleKind {
        match self {
            Self::Ros => ResampleKind::Ros,
            Self::Rus => ResampleKind::Rus,
            _ => ResampleKind::Original,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Ros => "ros",
            Self::Rus => "rus",
            Self::Wbe => "wbe",
            Self::Focal => "focal",
        }
    }

    /// Label used in printed tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Original => "Original",
            Self::Ros => "ROS",
            Self::Rus => "RUS",
            Self::Wbe => "WBE",
            Self::Focal => "Focal",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Where a report embedding comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Static word vectors, max-pooled over the preprocessed report.
    VectorFile { path: PathBuf, format: VectorFormat },
    /// `<dir>/<bug_id>.json` token matrices from a contextual model.
    Precomputed { dir: PathBuf },
    /// Ready-made report vectors, `{bug_id: [..]}`.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub name: String,
    pub dim: usize,
    #[serde(flatten)]
    pub source: EmbeddingSource,
}

/// How method vectors are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MethodEncoder {
    Hashed {
        #[serde(default)]
        seed: u64,
    },
    /// Attention over path-contexts, randomly initialized; `joint` trains
    /// it together with the classifier, otherwise it stays frozen.
    Attention {
        token_dim: usize,
        path_dim: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        joint: bool,
    },
    /// Ready-made method vectors, `{ast_ref: [..]}`.
    Table { path: PathBuf },
}

impl Default for MethodEncoder {
    fn default() -> Self {
        Self::Hashed { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDefaults {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossDefaults {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

impl LossDefaults {
    pub fn focal(&self) -> LossSpec {
        LossSpec::focal(self.alpha, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub embedding_specs: Vec<EmbeddingSpec>,
    pub strategies: Vec<Strategy>,
    pub datasets: Vec<DatasetSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub train_config: TrainConfig,
    #[serde(default)]
    pub loss_defaults: LossDefaults,
    #[serde(default)]
    pub method_encoder: MethodEncoder,
    #[serde(default)]
    pub extraction: ExtractionLimits,
    #[serde(default = "default_activation")]
    pub tower_activation: Activation,
    /// Stopword file replacing the bundled list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub map_variant: MapVariant,
    #[serde(default)]
    pub split_mode: SplitMode,
    #[serde(default)]
    pub strict_dataset: bool,
    /// Combinations run concurrently.
    #[serde(default = "one")]
    pub workers: usize,
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for spec in &mut self.embedding_specs {
            match &mut spec.source {
                EmbeddingSource::VectorFile { path, .. } | EmbeddingSource::Table { path } => fix(path),
                EmbeddingSource::Precomputed { dir } => fix(dir),
            }
        }
        for d in &mut self.datasets {
            fix(&mut d.manifest);
        }
        if let MethodEncoder::Table { path } = &mut self.method_encoder {
            fix(path);
        }
        if let Some(p) = &mut self.stopwords {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_specs.is_empty() {
            return Err(Error::Config("at least one embedding is required".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        unique(self.embedding_specs.iter().map(|e| e.name.as_str()), "embedding")?;
        unique(self.datasets.iter().map(|d| d.name.as_str()), "dataset")?;
        unique(self.strategies.iter().map(|s| s.as_str()), "strategy")?;
        for spec in &self.embedding_specs {
            if spec.dim == 0 {
                return Err(Error::Config(format!("embedding `{}` has dim 0", spec.name)));
            }
            if spec.name.is_empty() || spec.name.contains(['/', '\\']) {
                return Err(Error::Config(format!(
                    "embedding name `{}` is not a valid file name",
                    spec.name
                )));
            }
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let MethodEncoder::Attention {
            token_dim, path_dim, ..
        } = self.method_encoder
        {
            if token_dim == 0 || path_dim == 0 {
                return Err(Error::Config("attention dims must be positive".into()));
            }
        }
        self.train_config.validate()?;
        self.loss_defaults.focal().validate()?;
        Ok(())
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        match &self.stopwords {
            None => Ok(PreprocessConfig::default()),
            Some(path) => PreprocessConfig::with_stopwords(load_stopwords(path)?),
        }
    }
}

fn unique<'a>(names: impl Iterator<Item = &'a str>, kind: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::Config(format!("duplicate {kind} `{n}`")));
        }
    }
    Ok(())
}
