//! Benchmark orchestration: configuration, trials, metrics and CSV output.

mod config;
mod io;
mod run;
mod summary;

use std::path::Path;

pub use config::{load_config, parse_config, Experiment, ExperimentConfig};
pub use io::{read_results, write_diagnostics, write_results, write_summary, RESULTS_HEADER, SUMMARY_HEADER};
pub use run::{run_experiment, DiagnosticRow, ExperimentOutput};
pub use summary::{summarize, Metric, SummaryRow};

use crate::Result;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Runs the experiment and writes `results.csv`, `summary.csv` and, when asked,
/// `diagnostics.csv` into `out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path, diagnostics: bool) -> Result<ExperimentOutput> {
    let out = run_experiment(cfg, diagnostics)?;
    std::fs::create_dir_all(out_dir)?;
    write_results(&out_dir.join(RESULTS_FILE), &out.records)?;
    write_summary(&out_dir.join(SUMMARY_FILE), &summarize(&out.records, cfg.iterations))?;
    if diagnostics {
        write_diagnostics(&out_dir.join(DIAGNOSTICS_FILE), &out.diagnostics)?;
    }
    Ok(out)
}
