use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::DiagnosticRow;
use super::summary::SummaryRow;
use crate::estimators::MetricsRecord;
use crate::samplers::Algorithm;
use crate::Result;

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    trial: usize,
    algorithm: Algorithm,
    sigma: f64,
    mse: Option<f64>,
    relative_mse: Option<f64>,
    test_log_likelihood: Option<f64>,
    ess: Option<f64>,
    runtime_s: Option<f64>,
    error: Option<String>,
}

impl From<&MetricsRecord> for ResultRow {
    fn from(r: &MetricsRecord) -> Self {
        ResultRow {
            trial: r.trial,
            algorithm: r.algorithm,
            sigma: r.sigma,
            mse: r.mse,
            relative_mse: r.relative_mse,
            test_log_likelihood: r.test_log_likelihood,
            ess: r.ess,
            runtime_s: r.runtime_seconds,
            error: r.error.clone(),
        }
    }
}

impl From<ResultRow> for MetricsRecord {
    fn from(r: ResultRow) -> Self {
        MetricsRecord {
            trial: r.trial,
            algorithm: r.algorithm,
            sigma: r.sigma,
            mse: r.mse,
            relative_mse: r.relative_mse,
            test_log_likelihood: r.test_log_likelihood,
            ess: r.ess,
            runtime_seconds: r.runtime_s,
            error: r.error.filter(|e| !e.is_empty()),
        }
    }
}

#[derive(Debug, Serialize)]
struct SummaryCsvRow {
    algorithm: Algorithm,
    sigma: f64,
    metric: &'static str,
    mean: Option<f64>,
    std: Option<f64>,
    runtime_per_iter_s: Option<f64>,
    is_best: bool,
    wilcoxon_p_vs_best: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DiagnosticCsvRow {
    trial: usize,
    algorithm: Algorithm,
    sigma: f64,
    iteration: usize,
    loss: Option<f64>,
    ess: f64,
    wall_s: Option<f64>,
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    // Written explicitly so an empty file still carries the schema.
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULTS_HEADER: [&str; 9] = [
    "trial",
    "algorithm",
    "sigma",
    "mse",
    "relative_mse",
    "test_log_likelihood",
    "ess",
    "runtime_s",
    "error",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "algorithm",
    "sigma",
    "metric",
    "mean",
    "std",
    "runtime_per_iter_s",
    "is_best",
    "wilcoxon_p_vs_best",
];

const DIAGNOSTICS_HEADER: [&str; 7] = ["trial", "algorithm", "sigma", "iteration", "loss", "ess", "wall_s"];

pub fn write_results(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_rows(path, records.iter().map(ResultRow::from), &RESULTS_HEADER)
}

pub fn read_results(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<ResultRow>()
        .map(|row| Ok(row?.into()))
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let rows = rows.iter().map(|r| SummaryCsvRow {
        algorithm: r.algorithm,
        sigma: r.sigma,
        metric: r.metric.name(),
        mean: r.mean,
        std: r.std,
        runtime_per_iter_s: r.runtime_per_iter_s,
        is_best: r.is_best,
        wilcoxon_p_vs_best: r.wilcoxon_p_vs_best,
    });
    write_rows(path, rows, &SUMMARY_HEADER)
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    let rows = rows.iter().map(|d| DiagnosticCsvRow {
        trial: d.trial,
        algorithm: d.algorithm,
        sigma: d.sigma,
        iteration: d.iteration,
        loss: d.loss,
        ess: d.ess,
        wall_s: d.wall_seconds,
    });
    write_rows(path, rows, &DIAGNOSTICS_HEADER)
}
