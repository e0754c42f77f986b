//! Run configuration file and dataset construction.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semimatch::data::{self, gen_blobs, gen_shapes, idx, read_container, BlobsSpec, ShapesSpec};
use semimatch::trainer::UnsupervisedConfig;
use semimatch::{Dataset, ModelConfig, Split, SplitSpec, TrainConfig};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Shapes,
    Blobs,
    Idx,
    Container,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub kind: DataKind,
    pub shapes: ShapesSpec,
    pub blobs: BlobsSpec,
    pub idx: Option<IdxPaths>,
    /// Dataset file written by `gen-data`.
    pub container: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: DataKind::Shapes,
            shapes: ShapesSpec { n_per_class: 250, ..ShapesSpec::default() },
            blobs: BlobsSpec::default(),
            idx: None,
            container: None,
        }
    }
}

/// Model widths; the input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub features_after_activation: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1, 2);
        ModelSection {
            hidden: m.hidden,
            feature_dim: m.feature_dim,
            features_after_activation: m.features_after_activation,
        }
    }
}

/// Everything a run needs. The top-level `seed` replaces the seeds of every
/// section, so one number determines the data, the split and the training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Save a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub data: DataSection,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub unsupervised: UnsupervisedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 0,
            data: DataSection::default(),
            split: SplitSpec::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            unsupervised: UnsupervisedConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {}", path.display(), e)))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {}", path.display(), e)).into())
    }

    /// Pushes the top-level seed into every section.
    pub fn propagate_seed(&mut self) {
        let s = self.seed;
        self.data.shapes.seed = s;
        self.data.blobs.seed = s;
        self.split.seed = s;
        self.train.seed = s;
        self.unsupervised.seed = s;
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        Ok(match d.kind {
            DataKind::Shapes => gen_shapes(&d.shapes)?,
            DataKind::Blobs => gen_blobs(&d.blobs)?,
            DataKind::Idx => {
                let Some(p) = &d.idx else {
                    bail!(UsageError("data.kind = \"idx\" needs [data.idx] images and labels".into()));
                };
                idx::load_idx(&p.images, &p.labels)?
            }
            DataKind::Container => {
                let Some(p) = &d.container else {
                    bail!(UsageError("data.kind = \"container\" needs data.container".into()));
                };
                let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                read_container(std::io::BufReader::new(f))?
            }
        })
    }

    pub fn split(&self, ds: &Dataset) -> Result<Split> {
        Ok(data::split(ds, &self.split)?)
    }

    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        ModelConfig {
            hidden: self.model.hidden.clone(),
            feature_dim: self.model.feature_dim,
            features_after_activation: self.model.features_after_activation,
            seed: self.seed,
            ..ModelConfig::new(ds.input_dim(), ds.classes)
        }
    }
}
