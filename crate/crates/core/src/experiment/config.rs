use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, Smooth};
use crate::data::{load_csv, make_synthetic, CsvOptions, Dataset, LabelOrder, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{MlpConfig, TrainConfig, DEFAULT_HIDDEN_DIM, DEFAULT_NUM_LAYERS};

pub const CONFIG_VERSION: u32 = 1;

/// Where the rows come from. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        label_order: LabelOrder,
    },
    /// A synthetic spec file; the built-in default spec when `spec` is
    /// omitted.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<PathBuf>,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic { spec: None }
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv {
                path,
                label_column,
                label_order,
            } => {
                let opts = CsvOptions {
                    label_order: *label_order,
                    ..CsvOptions::new(label_column.clone())
                };
                load_csv(path, &opts)
            }
            DatasetSource::Synthetic { spec } => make_synthetic(&self.synthetic_spec(spec.as_deref())?),
        }
    }

    fn synthetic_spec(&self, path: Option<&Path>) -> Result<SyntheticSpec> {
        match path {
            None => Ok(SyntheticSpec::default()),
            Some(p) => load_spec(p),
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            DatasetSource::Csv { path, .. } => *path = base.join(&*path),
            DatasetSource::Synthetic { spec: Some(p) } => *p = base.join(&*p),
            DatasetSource::Synthetic { spec: None } => {}
        }
    }

    fn referenced_file(&self) -> Option<&Path> {
        match self {
            DatasetSource::Csv { path, .. } => Some(path),
            DatasetSource::Synthetic { spec } => spec.as_deref(),
        }
    }
}

pub fn load_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SyntheticSpec::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Architecture overrides. `input_dim` and `num_classes` default to the
/// dataset's shape and only need setting when no dataset is involved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub num_layers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden_dim: DEFAULT_HIDDEN_DIM,
            num_layers: DEFAULT_NUM_LAYERS,
            input_dim: None,
            num_classes: None,
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_activations() -> Vec<String> {
    [
        "identity", "relu", "tanh", "sigmoid", "softmax", "softplus", "prelu", "ogab",
    ]
    .map(String::from)
    .to_vec()
}

fn default_groups() -> Vec<usize> {
    vec![1, 5, 10]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_ratio() -> f64 {
    0.8
}

fn default_ablation_groups() -> usize {
    crate::activation::DEFAULT_GROUPS
}

/// One JSON document drives every subcommand. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "default_activations")]
    pub activations: Vec<String>,
    /// G values tried for every OGAB entry in `activations`.
    #[serde(default = "default_groups")]
    pub groups: Vec<usize>,
    #[serde(default)]
    pub sigma: Smooth,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    /// G used by the OGAB variants of the ablation.
    #[serde(default = "default_ablation_groups")]
    pub ablation_groups: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.version != CONFIG_VERSION {
            bad.push(format!("version: unsupported {}", self.version));
        }
        if self.activations.is_empty() {
            bad.push("activations: at least one is required".to_string());
        }
        for name in &self.activations {
            if let Err(e) = ActivationKind::parse(name, 1, self.sigma) {
                bad.push(format!("activations: {e}"));
            }
        }
        if self.seeds.is_empty() {
            bad.push("seeds: at least one is required".to_string());
        }
        if self.groups.is_empty() || self.groups.contains(&0) {
            bad.push("groups: need one or more values, each >= 1".to_string());
        }
        if self.ablation_groups == 0 {
            bad.push("ablation_groups: must be >= 1".to_string());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            bad.push(format!("split_ratio: {} is outside (0, 1)", self.split_ratio));
        }
        if let Err(e) = self.train.validate() {
            bad.push(format!("train: {e}"));
        }
        if let Some(p) = self.dataset.referenced_file() {
            if !p.is_file() {
                bad.push(format!("dataset: {} does not exist", p.display()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Every (activation, G) cell of the grid, in config order. Non-OGAB
    /// activations appear once with no G.
    pub fn cells(&self) -> Result<Vec<(String, Option<usize>, ActivationKind)>> {
        let mut out = Vec::new();
        for name in &self.activations {
            let probe = ActivationKind::parse(name, 1, self.sigma)?;
            if probe.is_ogab() {
                for &g in &self.groups {
                    out.push((name.clone(), Some(g), ActivationKind::parse(name, g, self.sigma)?));
                }
            } else {
                out.push((name.clone(), None, probe));
            }
        }
        Ok(out)
    }

    pub fn mlp_config(&self, activation: ActivationKind, input_dim: usize, num_classes: usize, seed: u64) -> MlpConfig {
        MlpConfig {
            input_dim: self.model.input_dim.unwrap_or(input_dim),
            hidden_dim: self.model.hidden_dim,
            num_layers: self.model.num_layers,
            num_classes: self.model.num_classes.unwrap_or(num_classes),
            activation,
            seed,
        }
    }
}
