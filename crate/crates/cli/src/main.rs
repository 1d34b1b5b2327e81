use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ssids_core::experiment::{self, DataSource, Prepared, RunConfig, SweepPoint};
use ssids_core::metrics::{render_table, TableFormat};
use ssids_core::synthetic::SyntheticConfig;

/// Imbalanced semi-supervised intrusion detection experiments.
#[derive(Parser, Debug)]
#[command(name = "ssids", version, about)]
struct Cli {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted-key override such as `train.loss.temperature=0.1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Root under which run directories are created.
    #[arg(long, env = "SSIDS_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Raw CSV file; requires --schema.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `builtin:nsl-kdd`, `builtin:cicids2017` or a schema JSON file.
    #[arg(long)]
    schema: Option<String>,
    /// Use the built-in synthetic long-tailed benchmark.
    #[arg(long, conflicts_with = "data")]
    synthetic: bool,
    /// Directory of prepared splits (from `ssids prepare`).
    #[arg(long)]
    prepared: Option<PathBuf>,
    #[arg(long)]
    label_fraction: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    epochs_per_round: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Run directory; defaults to `<output root>/<command>`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read, encode and split a dataset into labeled, unlabeled and test containers.
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        /// Destination directory; defaults to `<output root>/prepared`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Supervised training on the labeled split only.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Supervised warm-up followed by self-training rounds.
    Selftrain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        rounds: Option<usize>,
        /// Share of the unlabeled pool used, in [0, 1].
        #[arg(long)]
        unlabeled_fraction: Option<f64>,
    },
    /// Evaluate a checkpoint on a dataset container.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "text")]
        format: TableFormat,
    },
    /// Compare the four combinations of the contrastive term and class weights.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, default_value = "text")]
        format: TableFormat,
    },
    /// Run the Cartesian product of override axes concurrently.
    Sweep {
        /// Axis as `KEY=V1,V2,...`; repeatable.
        #[arg(long = "axis", value_name = "KEY=VALUES", required = true)]
        axes: Vec<String>,
        /// Maximum number of concurrent runs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Sweep directory; defaults to `<output root>/sweep`.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn split_pair(s: &str) -> Result<(String, String), ssids_core::Error> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ssids_core::Error::InvalidArgument(format!("expected KEY=VALUE, got {s:?}")))
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

fn data_overrides(d: &DataArgs, out: &mut Vec<(String, String)>) -> Result<()> {
    if let Some(path) = &d.data {
        let schema = d
            .schema
            .clone()
            .ok_or_else(|| ssids_core::Error::InvalidArgument("--data requires --schema".into()))?;
        let source = DataSource::Csv { path: path.clone(), schema };
        out.push(("data".into(), serde_json::to_string(&source)?));
    } else if d.synthetic {
        out.push(("data".into(), serde_json::to_string(&DataSource::Synthetic(SyntheticConfig::default()))?));
    }
    if let Some(p) = &d.prepared {
        out.push(("prepared_dir".into(), serde_json::to_string(p)?));
    }
    push(out, "split.label_fraction", d.label_fraction);
    push(out, "split.test_fraction", d.test_fraction);
    push(out, "split.seed", d.split_seed);
    Ok(())
}

fn train_overrides(t: &TrainArgs, out: &mut Vec<(String, String)>) {
    push(out, "train.seed", t.seed);
    push(out, "train.warmup_epochs", t.warmup_epochs);
    push(out, "train.epochs_per_round", t.epochs_per_round);
    push(out, "train.batch_size", t.batch_size);
    push(out, "train.learning_rate", t.learning_rate);
}

/// Config file, then `--set`, then dedicated flags.
fn resolve(cli: &Cli, flags: Vec<(String, String)>) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli.overrides.iter().map(|s| split_pair(s)).collect::<Result<Vec<_>, _>>()?;
    overrides.extend(flags);
    let config = base.with_overrides(&overrides)?;
    config.validate()?;
    Ok(config)
}

fn run_dir(cli: &Cli, explicit: &Option<PathBuf>, command: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.output_root.join(command))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_metrics(summary: &experiment::RunSummary) -> Result<()> {
    let rows: Vec<(String, _)> = summary
        .rounds
        .iter()
        .enumerate()
        .map(|(r, m)| (if r == 0 { "warm-up".to_string() } else { format!("round {r}") }, m.clone()))
        .collect();
    emit(&render_table(&rows, &summary.class_names, TableFormat::Text)?);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare { data, out } => {
            let mut flags = Vec::new();
            data_overrides(data, &mut flags)?;
            let config = resolve(cli, flags)?;
            let dir = out.clone().unwrap_or_else(|| cli.output_root.join("prepared"));
            let prepared = experiment::prepare(&config)?;
            prepared.write(&dir)?;
            emit(&(serde_json::to_string_pretty(&prepared.manifest)? + "\n"));
            log::info!("splits written to {}", dir.display());
        }
        Command::Train { data, train } => {
            let mut flags = Vec::new();
            data_overrides(data, &mut flags)?;
            train_overrides(train, &mut flags);
            flags.push(("train.rounds".into(), "0".into()));
            let config = resolve(cli, flags)?;
            let dir = run_dir(cli, &train.run_dir, "train");
            let prepared = Prepared::obtain(&config)?;
            print_metrics(&experiment::run_selftrain(&config, &prepared, Some(&dir))?)?;
        }
        Command::Selftrain { data, train, rounds, unlabeled_fraction } => {
            let mut flags = Vec::new();
            data_overrides(data, &mut flags)?;
            train_overrides(train, &mut flags);
            push(&mut flags, "train.rounds", *rounds);
            push(&mut flags, "unlabeled_fraction", *unlabeled_fraction);
            let config = resolve(cli, flags)?;
            let dir = run_dir(cli, &train.run_dir, "selftrain");
            let prepared = Prepared::obtain(&config)?;
            print_metrics(&experiment::run_selftrain(&config, &prepared, Some(&dir))?)?;
        }
        Command::Evaluate { checkpoint, dataset, format } => {
            let report = experiment::evaluate_files(checkpoint, dataset)?;
            let (ds, _) = ssids_core::data::read_dataset(dataset)?;
            let name = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint").to_string();
            emit(&render_table(&[(name, report)], ds.class_names(), *format)?);
        }
        Command::Ablate { data, train, rounds, format } => {
            let mut flags = Vec::new();
            data_overrides(data, &mut flags)?;
            train_overrides(train, &mut flags);
            push(&mut flags, "train.rounds", *rounds);
            let config = resolve(cli, flags)?;
            let dir = run_dir(cli, &train.run_dir, "ablate");
            let prepared = Prepared::obtain(&config)?;
            let result = experiment::run_ablation(&config, &prepared, Some(&dir))?;
            emit(&result.comparison(*format)?);
        }
        Command::Sweep { axes, workers, run_dir: explicit } => {
            let config = resolve(cli, Vec::new())?;
            let axes = axes
                .iter()
                .map(|a| split_pair(a).map(|(k, v)| (k, v.split(',').map(|s| s.trim().to_string()).collect())))
                .collect::<Result<Vec<(String, Vec<String>)>, _>>()?;
            let points: Vec<SweepPoint> = experiment::sweep_grid(&axes);
            for p in &points {
                config.with_overrides(&p.overrides)?.validate()?;
            }
            let dir = run_dir(cli, explicit, "sweep");
            let results = experiment::run_sweep(&config, &points, &dir, *workers);
            let mut failed = None;
            for (name, outcome) in results {
                match outcome {
                    Ok(s) => emit(&format!("{name}\tmacro_f1={:.4}\n", s.final_metrics.macro_f1)),
                    Err(e) => {
                        emit(&format!("{name}\tfailed: {e}\n"));
                        failed.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e).context("at least one sweep run failed");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ssids_core::Error>() {
        Some(e) if e.is_config_error() => 2,
        _ => 1,
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

