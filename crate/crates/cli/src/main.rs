use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ogab::data::SyntheticSpec;
use ogab::experiment::{self, CommandReport, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "ogab", version, about = "OGAB experiment runner")]
struct Cli {
    /// JSON config (a synthetic spec for gen-data, an experiment config
    /// otherwise). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,

    /// Concurrent training runs; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset CSV plus a sidecar JSON.
    GenData {
        /// Defaults to <out-dir>/synthetic.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model: checkpoint, run result and loss curve.
    Train,
    /// Activation x G x seed grid.
    Bench,
    /// ReLU, OGAB without orthogonality, OGAB without group bias, OGAB.
    Ablate,
    /// Parameter counts and overheads of the OGAB variants.
    Params,
    /// Hidden-layer outputs of a checkpoint on the config's dataset.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// 0-based hidden layer.
        #[arg(long)]
        layer: usize,
        /// Defaults to <out-dir>/embeddings_layer<N>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn experiment_config(path: Option<&Path>) -> ogab::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn run(cli: &Cli) -> ogab::Result<CommandReport> {
    let out_dir = &cli.out_dir;
    match &cli.command {
        Command::GenData { out } => {
            let spec = match &cli.config {
                Some(p) => experiment::load_spec(p)?,
                None => SyntheticSpec::default(),
            };
            let out = out.clone().unwrap_or_else(|| out_dir.join("synthetic.csv"));
            experiment::cmd_gen_data(&spec, &out)
        }
        Command::Train => {
            let cfg = experiment_config(cli.config.as_deref())?;
            let (result, report) = experiment::cmd_train(&cfg, out_dir)?;
            match &result.metrics {
                Some(m) => println!(
                    "{} seed {}: f1 {:.2}, balanced accuracy {:.2}",
                    result.activation, result.seed, m.f1, m.balanced_accuracy
                ),
                None => println!("{} seed {}: failed", result.activation, result.seed),
            }
            Ok(report)
        }
        Command::Bench => {
            let cfg = experiment_config(cli.config.as_deref())?;
            let (table, report) = experiment::cmd_bench(&cfg, out_dir, workers(cli.workers))?;
            print_summary(&table.summary);
            Ok(report)
        }
        Command::Ablate => {
            let cfg = experiment_config(cli.config.as_deref())?;
            let (table, report) = experiment::cmd_ablate(&cfg, out_dir, workers(cli.workers))?;
            print_summary(&table.summary);
            Ok(report)
        }
        Command::Params => {
            let cfg = experiment_config(cli.config.as_deref())?;
            let (table, report) = experiment::cmd_params(&cfg, out_dir)?;
            for r in &table.rows {
                let g = r.groups.map(|g| g.to_string()).unwrap_or_else(|| "-".into());
                println!(
                    "{:<14} G={:<3} {:>8} (+{}, {:.1}%)",
                    r.variant, g, r.param_count, r.overhead, r.overhead_pct
                );
            }
            Ok(report)
        }
        Command::ExportEmbeddings { checkpoint, layer, out } => {
            let cfg = experiment_config(cli.config.as_deref())?;
            let out = out
                .clone()
                .unwrap_or_else(|| out_dir.join(format!("embeddings_layer{layer}.csv")));
            experiment::cmd_export_embeddings(&cfg, checkpoint, *layer, &out)
        }
    }
}

fn print_summary(rows: &[experiment::RowStats]) {
    for r in rows {
        let g = r.groups.map(|g| format!(" G={g}")).unwrap_or_default();
        match (r.f1_mean, r.bacc_mean) {
            (Some(f1), Some(bacc)) => println!(
                "{}{g}: f1 {f1:.2} ± {:.2}, balanced accuracy {bacc:.2} ± {:.2} ({} runs)",
                r.activation,
                r.f1_std.unwrap_or(0.0),
                r.bacc_std.unwrap_or(0.0),
                r.n_ok
            ),
            _ => println!("{}{g}: every run failed", r.activation),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(report) => {
            for path in &report.written {
                log::info!("wrote {}", path.display());
            }
            if report.failed_runs > 0 {
                log::warn!("{} run(s) failed and were left out of the means", report.failed_runs);
            }
            if report.runtime_failure() {
                eprintln!("error: every run failed for {}", report.dead_cells.join(", "));
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
