//! Experiment runner behind the `ogab` command line: data generation,
//! single runs, benchmark grids, ablations, parameter tables and embedding
//! export. Every JSON artifact keeps wall-clock numbers in a top-level
//! `timing` object and nowhere else.

mod config;
mod grid;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{load_spec, DatasetSource, ExperimentConfig, ModelSettings, CONFIG_VERSION};
pub use grid::{
    cmd_ablate, cmd_bench, mean_std, run_grid, summarize, write_table_csv, BenchRow, BenchTable, Cell,
    GridOutput, RowStats, ABLATION_VARIANTS, TABLE_HEADER,
};
pub use run::{derive_seed, run_once, RunOutput, RunResult, RunSpec, RunStatus};

use crate::activation::ActivationKind;
use crate::data::{make_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, MlpModel};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    /// Per run, keyed `activation|G|seed`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub runs: BTreeMap<String, f64>,
}

/// What a command wrote and whether anything failed at run time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandReport {
    pub written: Vec<PathBuf>,
    pub failed_runs: usize,
    /// Cells in which every seed failed.
    pub dead_cells: Vec<String>,
}

impl CommandReport {
    pub fn runtime_failure(&self) -> bool {
        !self.dead_cells.is_empty()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Removes every `timing` member, at any depth. What is left of an
/// artifact is expected to be identical across reruns.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timing");
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataSidecar {
    pub version: u32,
    pub csv: String,
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub n_samples: usize,
    pub n_features: usize,
    pub class_counts: Vec<usize>,
    pub imbalance_ratio: f64,
}

/// Writes the generated CSV at `out` and a sidecar JSON next to it (same
/// stem, `.json`).
pub fn cmd_gen_data(spec: &SyntheticSpec, out: &Path) -> Result<CommandReport> {
    let ds = make_synthetic(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ds.save_csv(out)?;
    let sidecar_path = out.with_extension("json");
    let sidecar = GenDataSidecar {
        version: 1,
        csv: out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        spec: spec.clone(),
        seed: spec.seed,
        n_samples: ds.len(),
        n_features: ds.n_features(),
        class_counts: ds.class_counts(),
        imbalance_ratio: ds.imbalance_ratio()?,
    };
    write_json(&sidecar_path, &sidecar)?;
    log::debug!(
        "{}: {} rows, IR {}",
        out.display(),
        sidecar.n_samples,
        sidecar.imbalance_ratio
    );
    Ok(CommandReport {
        written: vec![out.to_path_buf(), sidecar_path],
        ..CommandReport::default()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArtifact {
    #[serde(flatten)]
    pub run: RunResult,
    pub timing: Timing,
}

/// One training run: `checkpoint.json`, `run_result.json` and
/// `loss_curve.csv`. The config must name exactly one activation, one G
/// (for OGAB) and one seed.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunResult, CommandReport)> {
    let cells = cfg.cells()?;
    if cells.len() != 1 || cfg.seeds.len() != 1 {
        return Err(Error::Config(format!(
            "train runs a single model: give one activation, one G and one seed (got {} cell(s), {} seed(s))",
            cells.len(),
            cfg.seeds.len()
        )));
    }
    let (name, groups, kind) = cells.into_iter().next().expect("one cell");
    let ds = cfg.dataset.load()?;
    let spec = RunSpec {
        name: &name,
        groups,
        kind,
        seed: cfg.seeds[0],
        hidden_dim: cfg.model.hidden_dim,
        num_layers: cfg.model.num_layers,
        split_ratio: cfg.split_ratio,
        train: &cfg.train,
    };
    let out = run_once(&ds, &spec)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = CommandReport::default();
    let ckpt = out_dir.join("checkpoint.json");
    Checkpoint::new(&out.model, Some(&out.scaler)).save(&ckpt)?;
    let result_path = out_dir.join("run_result.json");
    write_json(
        &result_path,
        &TrainArtifact {
            run: out.result.clone(),
            timing: Timing {
                total_seconds: out.seconds,
                runs: BTreeMap::new(),
            },
        },
    )?;
    let curve = out_dir.join("loss_curve.csv");
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in out.loss_curve.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(&curve, text).map_err(|e| Error::io(&curve, e))?;
    report.written.extend([ckpt, result_path, curve]);
    if !out.result.is_ok() {
        report.failed_runs = 1;
        report.dead_cells.push(name.clone());
    }
    Ok((out.result, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub variant: String,
    #[serde(rename = "G")]
    pub groups: Option<usize>,
    pub param_count: usize,
    /// Extra parameters over the baseline.
    pub overhead: usize,
    pub overhead_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub version: u32,
    /// Widths of the linear stack, input first.
    pub architecture: Vec<usize>,
    pub rows: Vec<ParamRow>,
}

pub const PARAMS_HEADER: [&str; 5] = ["variant", "G", "param_count", "overhead", "overhead_pct"];

/// Parameter counts of the baseline (no activation) and of every OGAB
/// variant for each G in the config. Input width and class count come from
/// `model.input_dim` / `model.num_classes` or, failing that, the dataset.
pub fn cmd_params(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(ParamTable, CommandReport)> {
    let (input_dim, num_classes) = match (cfg.model.input_dim, cfg.model.num_classes) {
        (Some(d), Some(c)) => (d, c),
        (d, c) => {
            let ds = cfg.dataset.load()?;
            (d.unwrap_or(ds.n_features()), c.unwrap_or(ds.num_classes))
        }
    };
    let count = |kind: ActivationKind| -> Result<usize> {
        let mlp = cfg.mlp_config(kind, input_dim, num_classes, 0);
        Ok(MlpModel::build(&mlp)?.count_parameters())
    };
    let baseline = count(ActivationKind::Identity)?;
    let row = |variant: &str, groups: Option<usize>, n: usize| ParamRow {
        variant: variant.to_string(),
        groups,
        param_count: n,
        overhead: n - baseline,
        overhead_pct: 100.0 * (n - baseline) as f64 / baseline as f64,
    };
    let mut rows = vec![row("baseline", None, baseline)];
    for &g in &cfg.groups {
        for variant in ["ogab", "ogab-no-orth", "ogab-no-bias"] {
            let n = count(ActivationKind::parse(variant, g, cfg.sigma)?)?;
            rows.push(row(variant, Some(g), n));
        }
    }
    let mlp = cfg.mlp_config(ActivationKind::Identity, input_dim, num_classes, 0);
    let mut architecture = vec![mlp.input_dim];
    architecture.extend(mlp.layer_dims().iter().map(|&(_, out)| out));
    let table = ParamTable {
        version: 1,
        architecture,
        rows,
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json = out_dir.join("params.json");
    write_json(&json, &table)?;
    let csv_path = out_dir.join("params.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = ::csv::Writer::from_writer(file);
    let map_err = |e: ::csv::Error| Error::InvalidInput(format!("{}: {e}", csv_path.display()));
    w.write_record(PARAMS_HEADER).map_err(map_err)?;
    for r in &table.rows {
        w.write_record([
            r.variant.clone(),
            r.groups.map(|g| g.to_string()).unwrap_or_default(),
            r.param_count.to_string(),
            r.overhead.to_string(),
            r.overhead_pct.to_string(),
        ])
        .map_err(map_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok((
        table,
        CommandReport {
            written: vec![json, csv_path],
            ..CommandReport::default()
        },
    ))
}

/// Post-activation outputs of hidden layer `layer` (0-based) for every row
/// of the config's dataset, scaled with the checkpoint's scaler when it has
/// one. Columns `f0..`, then `label`.
pub fn cmd_export_embeddings(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    layer: usize,
    out: &Path,
) -> Result<CommandReport> {
    let (model, scaler) = Checkpoint::load(checkpoint)?.into_model()?;
    let hidden = model.activations().len();
    if layer >= hidden {
        return Err(Error::Contract(format!(
            "layer index {layer} out of range: the model has {hidden} hidden layers (0..{})",
            hidden - 1
        )));
    }
    let ds = cfg.dataset.load()?;
    if ds.n_features() != model.config().input_dim {
        return Err(Error::Config(format!(
            "dataset has {} features but the checkpoint expects {}",
            ds.n_features(),
            model.config().input_dim
        )));
    }
    let x = match &scaler {
        Some(s) => s.transform(&ds.x)?,
        None => ds.x.clone(),
    };
    let embedding = model.hidden_output(&x, layer)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ds.with_features(embedding)?.save_csv(out)?;
    Ok(CommandReport {
        written: vec![out.to_path_buf()],
        ..CommandReport::default()
    })
}
