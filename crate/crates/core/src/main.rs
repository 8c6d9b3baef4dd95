use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use flowpmc::bench::{self, Experiment};
use flowpmc::samplers::Algorithm;

#[derive(Parser)]
#[command(name = "flowpmc", version, about = "Population Monte Carlo benchmarks with normalizing-flow proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, env = "FLOWPMC_SEED")]
        seed: Option<u64>,
        /// Comma-separated algorithm ids.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
        #[arg(long)]
        experiment: Option<Experiment>,
        /// Also write per-iteration diagnostics.csv.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute a summary from a results file.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Iterations per run, used for the per-iteration runtime.
        #[arg(long, default_value_t = 50)]
        iterations: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> flowpmc::Result<()> {
    match command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            algos,
            experiment,
            diagnostics,
        } => {
            let mut cfg = bench::load_config(&config)?;
            if let Some(e) = experiment {
                if e != cfg.experiment && cfg.nf_base_lr.is_none() {
                    info!("nf-pmc learning rate follows the {e} default");
                }
                cfg.experiment = e;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(a) = algos {
                cfg.algorithms = a;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            let output = bench::run_to_dir(&cfg, &cfg.output_dir, diagnostics)?;
            let failed = output.records.iter().filter(|r| !r.is_complete()).count();
            info!(
                "wrote {} rows ({failed} failed) to {}",
                output.records.len(),
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = bench::load_config(&config)?;
            info!(
                "{}: valid {} config, {} runs",
                config.display(),
                cfg.experiment,
                cfg.trials * cfg.algorithms.len() * cfg.sigmas.len()
            );
            Ok(())
        }
        Command::Summarize { input, out, iterations } => {
            if iterations == 0 {
                return Err(flowpmc::Error::InvalidArgument("--iterations must be positive".into()));
            }
            let records = bench::read_results(&input)?;
            bench::write_summary(&out, &bench::summarize(&records, iterations))
        }
    }
}
