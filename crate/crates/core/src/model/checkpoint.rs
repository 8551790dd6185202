use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::model::{Linear, MlpConfig, MlpModel};

pub const CHECKPOINT_FORMAT: &str = "ogab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a trained model. Floats are written in shortest
/// round-trip form so a save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: MlpConfig,
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
    /// Input scaling fitted on the training split, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<MinMaxScaler>,
}

impl Checkpoint {
    pub fn new(model: &MlpModel, scaler: Option<&MinMaxScaler>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            layers: model.layers().to_vec(),
            activations: model.activations().to_vec(),
            scaler: scaler.cloned(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint (format `{}`)", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    pub fn into_model(self) -> Result<(MlpModel, Option<MinMaxScaler>)> {
        let model = MlpModel::from_parts(self.config, self.layers, self.activations)?;
        Ok((model, self.scaler))
    }
}

impl MlpModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::new(self, None).save(path)
    }

    pub fn load(path: &Path) -> Result<MlpModel> {
        Ok(Checkpoint::load(path)?.into_model()?.0)
    }
}
