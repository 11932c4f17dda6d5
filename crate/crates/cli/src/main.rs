mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;
use crate::error::CliResult;

/// Identify truncated Volterra models with structured kernel priors.
///
/// Every option can also be set in a TOML file passed with `--config`
/// (see `volterra config-reference`); flags take precedence.
#[derive(Debug, Parser)]
#[command(name = "volterra", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root [env: VOLTERRA_OUT] [default: ./volterra-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a databank and write one directory per dataset plus manifest.json.
    Simulate(SimulateArgs),
    /// Fit one kernel variant to a dataset; writes model.json and appends to metrics.csv.
    Fit(FitArgs),
    /// Predict the test split of a dataset from a saved model; writes predictions.csv.
    Predict(PredictArgs),
    /// Time one EB-cost evaluation per variant and record length; writes timings.csv.
    Benchmark(BenchmarkArgs),
    /// Fit every variant to every dataset of a manifest; writes report.json and report.csv.
    Report(ReportArgs),
    /// Print a fully commented reference configuration.
    ConfigReference,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// d1like | d2like-a | d2like-b | d3like | d4like [default: d4like]
    #[arg(long)]
    pub bank: Option<String>,
    /// Number of datasets [default: 20]
    #[arg(long)]
    pub count: Option<usize>,
    /// Bank seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training samples [default: bank specific]
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test samples [default: bank specific multiple of n_train]
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Polynomial order (d2like only)
    #[arg(long)]
    pub order: Option<usize>,
    /// Nominal SNR in dB (d2like only)
    #[arg(long)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct FitParams {
    /// dc-bd | dc-decay | dc-ob (suffix -w for the Wiener form) | control-bd-delta [default: dc-ob]
    #[arg(long)]
    pub variant: Option<String>,
    /// Volterra order [default: the bank's model order]
    #[arg(long)]
    pub order: Option<usize>,
    /// Memory length [default: 30]
    #[arg(long)]
    pub memory: Option<usize>,
    /// dense | fast [default: dense]
    #[arg(long)]
    pub path: Option<String>,
    /// trim | prewindow [default: trim]
    #[arg(long)]
    pub init: Option<String>,
    /// Optimizer restarts [default: 5]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Iterations per restart [default: 2000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Optimizer seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory (holding meta.json and data.csv).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write model.json [default: <out>/models/<dataset>-<variant>-<path>]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[command(flatten)]
    pub params: FitParams,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory [default: the one recorded in the model]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Bank generating the timing inputs [default: d4like]
    #[arg(long)]
    pub bank: Option<String>,
    /// Comma-separated record lengths [default: 1000,2000,4000,8000]
    #[arg(long = "N", alias = "n", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Memory length [default: 50]
    #[arg(long)]
    pub memory: Option<usize>,
    /// Volterra order [default: the bank's model order]
    #[arg(long)]
    pub order: Option<usize>,
    /// Timed evaluations per point [default: 5]
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Input seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated `variant/path` entries [default: dc-ob-w/fast,dc-decay-w/fast,dc-bd-w/fast,dc-ob-w/dense]
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// manifest.json written by `simulate`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated kernel variants [default: dc-ob,dc-bd,control-bd-delta]
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Where to write the report [default: the manifest's directory]
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    #[command(flatten)]
    pub params: FitParams,
}

fn run(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out = config::output_root(cli.out, file.out.clone());
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &file.simulate, &out),
        Command::Fit(a) => commands::fit(a, &file.fit, &out),
        Command::Predict(a) => commands::predict(a, &file.predict, &out),
        Command::Benchmark(a) => commands::benchmark(a, &file.benchmark, &out),
        Command::Report(a) => commands::report(a, &file.report, &file.fit),
        Command::ConfigReference => {
            print!("{}", config::REFERENCE);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("volterra: {e}");
            e.exit_code()
        }
    }
}
