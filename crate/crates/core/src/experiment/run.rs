use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::data::{stratified_split, Dataset, MinMaxScaler};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{train, MlpModel, TrainConfig};

/// Independent seeds for the split, the weights and the batch order,
/// derived from one run seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Outcome of one (activation, G, seed) training run. Wall time is kept
/// out of this record so the record itself is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResult {
    pub activation: String,
    #[serde(rename = "G")]
    pub groups: Option<usize>,
    pub seed: u64,
    pub status: RunStatus,
    pub param_count: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    /// Why the run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Everything a run produced, including the trained model.
pub struct RunOutput {
    pub result: RunResult,
    pub model: MlpModel,
    pub scaler: MinMaxScaler,
    pub loss_curve: Vec<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunSpec<'a> {
    pub name: &'a str,
    pub groups: Option<usize>,
    pub kind: ActivationKind,
    pub seed: u64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub split_ratio: f64,
    pub train: &'a TrainConfig,
}

/// Split, fit the scaler on the training side, build, train and evaluate.
/// Divergence becomes a failed record; every other error is returned.
pub fn run_once(ds: &Dataset, spec: &RunSpec) -> Result<RunOutput> {
    let start = Instant::now();
    let split = stratified_split(ds, spec.split_ratio, derive_seed(spec.seed, SPLIT_STREAM))?;
    let mut scaler = MinMaxScaler::new();
    let x_train = scaler.fit_transform(&split.train.x)?;
    let x_test = scaler.transform(&split.test.x)?;

    let mlp = crate::model::MlpConfig {
        input_dim: ds.n_features(),
        hidden_dim: spec.hidden_dim,
        num_layers: spec.num_layers,
        num_classes: ds.num_classes,
        activation: spec.kind,
        seed: derive_seed(spec.seed, INIT_STREAM),
    };
    let mut model = MlpModel::build(&mlp)?;
    let mut result = RunResult {
        activation: spec.name.to_string(),
        groups: spec.groups,
        seed: spec.seed,
        status: RunStatus::Ok,
        param_count: model.count_parameters(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        final_loss: None,
        metrics: None,
        error: None,
    };

    let trained = train(
        &mut model,
        &x_train,
        &split.train.y,
        spec.train,
        derive_seed(spec.seed, SHUFFLE_STREAM),
    );
    let loss_curve = match trained {
        Ok(report) => report.loss_curve,
        Err(e @ Error::Diverged { .. }) => {
            log::warn!("{} G={:?} seed {}: {e}", spec.name, spec.groups, spec.seed);
            result.status = RunStatus::Failed;
            result.error = Some(e.to_string());
            return Ok(RunOutput {
                result,
                model,
                scaler,
                loss_curve: Vec::new(),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Err(e) => return Err(e),
    };
    result.final_loss = loss_curve.last().copied();
    let predicted = model.predict(&x_test)?;
    result.metrics = Some(MetricReport::evaluate(&split.test.y, &predicted, ds.num_classes)?);
    log::debug!(
        "{} G={:?} seed {}: F1 {:.2}",
        spec.name,
        spec.groups,
        spec.seed,
        result.metrics.as_ref().map_or(f64::NAN, |m| m.f1)
    );
    Ok(RunOutput {
        result,
        model,
        scaler,
        loss_curve,
        seconds: start.elapsed().as_secs_f64(),
    })
}
