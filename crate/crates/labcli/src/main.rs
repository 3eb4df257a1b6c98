use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use haarstab_lab::config::{Experiment, ExperimentConfig, Overrides};
use haarstab_lab::experiments;
use haarstab_lab::LabError;

#[derive(Parser)]
#[command(
    name = "haarlab",
    version,
    about = "Stability experiments for perturbed Haar systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `<out>/<experiment>.{csv,json}`.
    Run(RunArgs),
    /// List experiment names.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_experiment)]
    experiment: Option<Experiment>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    resolution: Option<i32>,
    /// Comma-separated; replaces `eta_list`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept non-dyadic eta values.
    #[arg(long)]
    no_align: bool,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse()
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn run(args: RunArgs) -> Result<bool, LabError> {
    let overrides = Overrides {
        experiment: args.experiment,
        dim: args.dim,
        resolution: args.resolution,
        eta: args.eta,
        seed: args.seed,
        out: args.out,
        no_align: args.no_align,
    };
    let cfg = ExperimentConfig::resolve(args.config.as_deref(), &overrides)?;
    let outcome = experiments::run(&cfg)?;
    let (csv, json) = outcome.write(&cfg.out)?;
    println!("wrote {} and {}", csv.display(), json.display());
    if outcome.passed() {
        println!("{}: pass", cfg.experiment);
    } else {
        for f in &outcome.failures {
            eprintln!("{}: FAIL: {f}", cfg.experiment);
        }
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{e}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_FAIL),
            Err(LabError::Config(e)) => {
                eprintln!("config error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAIL)
            }
        },
    }
}
