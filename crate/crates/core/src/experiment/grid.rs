use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::data::{Dataset, DatasetSummary};
use crate::error::{Error, Result};
use crate::experiment::{run_once, write_json, CommandReport, ExperimentConfig, RunResult, RunSpec, Timing};
use crate::metrics::F1Mode;
use crate::model::{Checkpoint, TrainConfig};

pub const TABLE_HEADER: [&str; 6] = ["activation", "G", "f1_mean", "f1_std", "bacc_mean", "bacc_std"];

/// Mean and sample standard deviation (n − 1 denominator; 0 for a single
/// value). `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1) as f64).sqrt()))
}

/// Aggregates of one (activation, G) cell over its successful seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub activation: String,
    #[serde(rename = "G")]
    pub groups: Option<usize>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub bacc_mean: Option<f64>,
    pub bacc_std: Option<f64>,
}

impl RowStats {
    pub fn from_runs(activation: &str, groups: Option<usize>, runs: &[RunResult]) -> RowStats {
        let ok: Vec<_> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let f1 = mean_std(&ok.iter().map(|m| m.f1).collect::<Vec<_>>());
        let bacc = mean_std(&ok.iter().map(|m| m.balanced_accuracy).collect::<Vec<_>>());
        RowStats {
            activation: activation.to_string(),
            groups,
            n_ok: ok.len(),
            n_failed: runs.len() - ok.len(),
            f1_mean: f1.map(|s| s.0),
            f1_std: f1.map(|s| s.1),
            bacc_mean: bacc.map(|s| s.0),
            bacc_std: bacc.map(|s| s.1),
        }
    }

    fn csv_record(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.activation.clone(),
            self.groups.map(|g| g.to_string()).unwrap_or_default(),
            num(self.f1_mean),
            num(self.f1_std),
            num(self.bacc_mean),
            num(self.bacc_std),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub stats: RowStats,
    pub runs: Vec<RunResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub version: u32,
    pub dataset: DatasetSummary,
    pub f1_mode: F1Mode,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Every (activation, G) cell with its per-seed runs.
    pub rows: Vec<BenchRow>,
    /// One row per activation; for activations run over several G the row
    /// with the best mean F1.
    pub summary: Vec<RowStats>,
    pub failed_runs: usize,
    pub timing: Timing,
}

impl BenchTable {
    pub fn row(&self, activation: &str, groups: Option<usize>) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.stats.activation == activation && r.stats.groups == groups)
    }

    pub fn summary_row(&self, activation: &str) -> Option<&RowStats> {
        self.summary.iter().find(|r| r.activation == activation)
    }
}

/// Best mean-F1 row per activation name, in first-appearance order. Rows
/// without any successful run lose to every row that has one; ties keep
/// the earlier row.
pub fn summarize(rows: &[BenchRow]) -> Vec<RowStats> {
    let mut out: Vec<RowStats> = Vec::new();
    for row in rows {
        let s = &row.stats;
        match out.iter_mut().find(|r| r.activation == s.activation) {
            None => out.push(s.clone()),
            Some(best) => {
                let better = match (s.f1_mean, best.f1_mean) {
                    (Some(a), Some(b)) => a > b,
                    (Some(_), None) => true,
                    _ => false,
                };
                if better {
                    *best = s.clone();
                }
            }
        }
    }
    out
}

pub struct Cell {
    pub name: String,
    pub groups: Option<usize>,
    pub kind: ActivationKind,
}

pub struct GridOutput {
    pub rows: Vec<BenchRow>,
    pub timing: Timing,
    /// Trained model of the first seed of each cell, when requested.
    pub first_models: Vec<Option<Checkpoint>>,
}

fn timing_key(name: &str, groups: Option<usize>, seed: u64) -> String {
    format!("{name}|{}|{seed}", groups.map_or("-".to_string(), |g| g.to_string()))
}

/// Runs every (cell, seed) pair on a pool of `workers` threads. Results are
/// keyed by position, so the output does not depend on scheduling.
pub fn run_grid(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    cells: &[Cell],
    workers: usize,
    keep_first_models: bool,
) -> Result<GridOutput> {
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.seeds.len()).map(move |s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let finished: Vec<((usize, usize), RunResult, f64, Option<Checkpoint>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| {
                let cell = &cells[c];
                let spec = RunSpec {
                    name: &cell.name,
                    groups: cell.groups,
                    kind: cell.kind,
                    seed: cfg.seeds[s],
                    hidden_dim: cfg.model.hidden_dim,
                    num_layers: cfg.model.num_layers,
                    split_ratio: cfg.split_ratio,
                    train: &cfg.train,
                };
                let out = run_once(ds, &spec)?;
                let ckpt = (keep_first_models && s == 0 && out.result.is_ok())
                    .then(|| Checkpoint::new(&out.model, Some(&out.scaler)));
                Ok(((c, s), out.result, out.seconds, ckpt))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut by_key: BTreeMap<(usize, usize), (RunResult, Option<Checkpoint>)> = BTreeMap::new();
    let mut timing = Timing::default();
    for (key, result, seconds, ckpt) in finished {
        let cell = &cells[key.0];
        timing
            .runs
            .insert(timing_key(&cell.name, cell.groups, cfg.seeds[key.1]), seconds);
        by_key.insert(key, (result, ckpt));
    }
    let mut rows = Vec::with_capacity(cells.len());
    let mut first_models = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        let mut first = None;
        for s in 0..cfg.seeds.len() {
            let (result, ckpt) = by_key.remove(&(c, s)).expect("every job reports back");
            if s == 0 {
                first = ckpt;
            }
            runs.push(result);
        }
        rows.push(BenchRow {
            stats: RowStats::from_runs(&cell.name, cell.groups, &runs),
            runs,
        });
        first_models.push(first);
    }
    timing.total_seconds = start.elapsed().as_secs_f64();
    Ok(GridOutput {
        rows,
        timing,
        first_models,
    })
}

pub fn write_table_csv(path: &Path, rows: &[RowStats]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = ::csv::Writer::from_writer(std::io::BufWriter::new(file));
    let map_err = |e: ::csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    w.write_record(TABLE_HEADER).map_err(map_err)?;
    for row in rows {
        w.write_record(row.csv_record()).map_err(map_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn table(ds: &Dataset, cfg: &ExperimentConfig, grid: GridOutput) -> BenchTable {
    let failed_runs = grid.rows.iter().map(|r| r.stats.n_failed).sum();
    BenchTable {
        version: 1,
        dataset: ds.summary(),
        f1_mode: F1Mode::for_classes(ds.num_classes),
        seeds: cfg.seeds.clone(),
        train: cfg.train.clone(),
        summary: summarize(&grid.rows),
        rows: grid.rows,
        failed_runs,
        timing: grid.timing,
    }
}

fn report_failures(t: &BenchTable, report: &mut CommandReport) {
    report.failed_runs = t.failed_runs;
    if t.failed_runs > 0 {
        log::warn!("{} run(s) failed and were left out of the means", t.failed_runs);
    }
    for row in &t.rows {
        if row.stats.n_ok == 0 {
            report.dead_cells.push(format!(
                "{} G={}",
                row.stats.activation,
                row.stats.groups.map_or("-".to_string(), |g| g.to_string())
            ));
        }
    }
}

/// The activation benchmark: `bench.json`, `bench.csv` with every cell and
/// `bench_summary.csv` with one row per activation.
pub fn cmd_bench(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<(BenchTable, CommandReport)> {
    let ds = cfg.dataset.load()?;
    let cells: Vec<Cell> = cfg
        .cells()?
        .into_iter()
        .map(|(name, groups, kind)| Cell { name, groups, kind })
        .collect();
    log::info!("bench: {} cells x {} seeds", cells.len(), cfg.seeds.len());
    let grid = run_grid(&ds, cfg, &cells, workers, false)?;
    let t = table(&ds, cfg, grid);

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = CommandReport::default();
    let json = out_dir.join("bench.json");
    write_json(&json, &t)?;
    let all: Vec<RowStats> = t.rows.iter().map(|r| r.stats.clone()).collect();
    let csv = out_dir.join("bench.csv");
    write_table_csv(&csv, &all)?;
    let summary = out_dir.join("bench_summary.csv");
    write_table_csv(&summary, &t.summary)?;
    report.written.extend([json, csv, summary]);
    report_failures(&t, &mut report);
    Ok((t, report))
}

pub const ABLATION_VARIANTS: [&str; 4] = ["relu", "ogab-no-orth", "ogab-no-bias", "ogab"];

/// ReLU against OGAB without orthogonality, without group bias, and in
/// full, all OGAB variants at `ablation_groups`. Writes `ablation.json`,
/// `ablation.csv` and a first-seed checkpoint per variant.
pub fn cmd_ablate(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<(BenchTable, CommandReport)> {
    let ds = cfg.dataset.load()?;
    let g = cfg.ablation_groups;
    let cells = ABLATION_VARIANTS
        .iter()
        .map(|&name| {
            let kind = ActivationKind::parse(name, g, cfg.sigma)?;
            Ok(Cell {
                name: name.to_string(),
                groups: kind.is_ogab().then_some(g),
                kind,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grid = run_grid(&ds, cfg, &cells, workers, true)?;
    let checkpoints = std::mem::take(&mut grid.first_models);
    let t = table(&ds, cfg, grid);

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = CommandReport::default();
    let json = out_dir.join("ablation.json");
    write_json(&json, &t)?;
    let csv = out_dir.join("ablation.csv");
    write_table_csv(&csv, &t.summary)?;
    report.written.extend([json, csv]);
    let ckpt_dir = out_dir.join("ablation_checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    for (name, ckpt) in ABLATION_VARIANTS.iter().zip(checkpoints) {
        if let Some(ckpt) = ckpt {
            let path = ckpt_dir.join(format!("{name}.json"));
            ckpt.save(&path)?;
            report.written.push(path);
        }
    }
    report_failures(&t, &mut report);
    Ok((t, report))
}

impl BenchTable {
    pub fn load(path: &Path) -> Result<BenchTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
