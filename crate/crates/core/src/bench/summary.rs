use std::collections::BTreeMap;
use std::fmt;

use log::warn;

use crate::estimators::{wilcoxon_signed_rank, MetricsRecord};
use crate::samplers::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Mse,
    RelativeMse,
    TestLogLikelihood,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::RelativeMse, Metric::TestLogLikelihood];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::RelativeMse => "relative_mse",
            Metric::TestLogLikelihood => "test_log_likelihood",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self == Metric::TestLogLikelihood
    }

    pub fn value(self, record: &MetricsRecord) -> Option<f64> {
        match self {
            Metric::Mse => record.mse,
            Metric::RelativeMse => record.relative_mse,
            Metric::TestLogLikelihood => record.test_log_likelihood,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub metric: Metric,
    /// `None` when the group has no completed trials.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub runtime_per_iter_s: Option<f64>,
    pub is_best: bool,
    /// Paired test against the best algorithm for this (σ, metric); empty on the best row.
    pub wilcoxon_p_vs_best: Option<f64>,
    pub completed: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Group {
    algorithm: Algorithm,
    by_trial: BTreeMap<usize, f64>,
    runtimes: Vec<f64>,
}

/// Aggregates per-run records into one row per (algorithm, σ, metric).
///
/// Runtime per iteration divides each run's wall time by `iterations`, the
/// configured `J`. Only completed runs enter the aggregates; a group with none
/// still gets a row, with empty statistics.
pub fn summarize(records: &[MetricsRecord], iterations: usize) -> Vec<SummaryRow> {
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|m| records.iter().any(|r| m.value(r).is_some()))
        .collect();
    let mut sigmas: Vec<f64> = records.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut algorithms: Vec<Algorithm> = records.iter().map(|r| r.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();

    let mut rows = Vec::new();
    for &sigma in &sigmas {
        for &metric in &metrics {
            let groups: Vec<Group> = algorithms
                .iter()
                .map(|&algorithm| {
                    let runs: Vec<&MetricsRecord> = records
                        .iter()
                        .filter(|r| r.algorithm == algorithm && r.sigma == sigma && r.is_complete())
                        .collect();
                    Group {
                        algorithm,
                        by_trial: runs.iter().filter_map(|r| Some((r.trial, metric.value(r)?))).collect(),
                        runtimes: runs.iter().filter_map(|r| r.runtime_seconds).collect(),
                    }
                })
                .filter(|g| records.iter().any(|r| r.algorithm == g.algorithm && r.sigma == sigma))
                .collect();
            rows.extend(summarize_groups(&groups, sigma, metric, iterations));
        }
    }
    rows
}

fn summarize_groups(groups: &[Group], sigma: f64, metric: Metric, iterations: usize) -> Vec<SummaryRow> {
    let stats: Vec<Option<(f64, f64)>> = groups
        .iter()
        .map(|g| {
            let values: Vec<f64> = g.by_trial.values().copied().collect();
            (!values.is_empty()).then(|| mean_std(&values))
        })
        .collect();
    let best = stats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|(m, _)| (i, m)))
        .reduce(|a, b| {
            let better = if metric.higher_is_better() { b.1 > a.1 } else { b.1 < a.1 };
            if better {
                b
            } else {
                a
            }
        })
        .map(|(i, _)| i);

    groups
        .iter()
        .zip(&stats)
        .enumerate()
        .map(|(i, (g, s))| {
            if s.is_none() {
                warn!("no completed runs for {} sigma={sigma} {metric}", g.algorithm);
            }
            let p = best.filter(|&b| b != i && s.is_some()).and_then(|b| {
                let (a, reference): (Vec<f64>, Vec<f64>) = g
                    .by_trial
                    .iter()
                    .filter_map(|(t, v)| Some((*v, *groups[b].by_trial.get(t)?)))
                    .unzip();
                wilcoxon_signed_rank(&a, &reference).ok()
            });
            let runtime = (!g.runtimes.is_empty()).then(|| mean_std(&g.runtimes).0 / iterations as f64);
            SummaryRow {
                algorithm: g.algorithm,
                sigma,
                metric,
                mean: s.map(|(m, _)| m),
                std: s.map(|(_, sd)| sd),
                runtime_per_iter_s: runtime,
                is_best: best == Some(i),
                wilcoxon_p_vs_best: p,
                completed: g.by_trial.len(),
            }
        })
        .collect()
}
