use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use crate::estimators::{mse_mean_estimate, relative_mse, snis_mean, test_log_likelihood, MetricsRecord};
use crate::numkit::RngStream;
use crate::samplers::{run_ais, Algorithm, SamplerOutput};
use crate::targets::{make_gmm_target, make_logistic_dataset, GaussianMixtureTarget, LabeledData, LogisticRegressionTarget};
use crate::Result;

const STREAM_TARGET: u64 = 0;
const STREAM_SAMPLER: u64 = 1;

/// Per-iteration trace of one run, for `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub iteration: usize,
    pub loss: Option<f64>,
    pub ess: f64,
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    /// Sorted by (trial, algorithm, σ).
    pub records: Vec<MetricsRecord>,
    pub diagnostics: Vec<DiagnosticRow>,
}

enum TrialProblem {
    Gmm(GaussianMixtureTarget),
    Logistic {
        posterior: LogisticRegressionTarget,
        test: LabeledData,
        truth: Vec<f64>,
    },
}

impl TrialProblem {
    fn generate(cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<Self> {
        Ok(match cfg.experiment {
            Experiment::Gmm => TrialProblem::Gmm(make_gmm_target(rng, cfg.dimension, cfg.components)?),
            Experiment::Logistic => {
                let data = make_logistic_dataset(rng, cfg.dimension, cfg.n_train, cfg.n_test, cfg.zeta, cfg.delta)?;
                TrialProblem::Logistic {
                    posterior: data.posterior(cfg.zeta)?,
                    test: data.test,
                    truth: data.true_weights,
                }
            }
        })
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut feed = |v: &[f64]| v.iter().for_each(|x| x.to_bits().hash(&mut h));
        match self {
            TrialProblem::Gmm(t) => {
                feed(t.weights());
                t.means().iter().for_each(|m| feed(m));
                t.covariances().iter().for_each(|c| feed(c.as_slice()));
            }
            TrialProblem::Logistic { posterior, test, truth } => {
                feed(posterior.data().design.as_slice());
                feed(test.design.as_slice());
                feed(truth);
                posterior.data().labels.hash(&mut h);
            }
        }
        h.finish()
    }

    fn sample(&self, cfg: &ExperimentConfig, algorithm: Algorithm, sigma: f64, rng: &RngStream) -> Result<SamplerOutput> {
        let ais = cfg.ais_config(algorithm, sigma);
        match self {
            TrialProblem::Gmm(t) => run_ais(&ais, t, rng),
            TrialProblem::Logistic { posterior, .. } => run_ais(&ais, posterior, rng),
        }
    }

    fn score(&self, record: &mut MetricsRecord, output: &SamplerOutput, burn_in: usize) -> Result<()> {
        let est = snis_mean(output, burn_in)?;
        record.ess = Some(est.ess);
        match self {
            TrialProblem::Gmm(t) => {
                record.mse = Some(mse_mean_estimate(&est.mean, &t.true_mean())?);
            }
            TrialProblem::Logistic { test, truth, .. } => {
                record.mse = Some(mse_mean_estimate(&est.mean, truth)?);
                record.relative_mse = Some(relative_mse(&est.mean, truth)?);
                record.test_log_likelihood = Some(test_log_likelihood(output, test, burn_in)?);
            }
        }
        Ok(())
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize, keep_diagnostics: bool) -> (Vec<MetricsRecord>, Vec<DiagnosticRow>) {
    let trial_rng = RngStream::new(cfg.seed, trial as u64);
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let problem = match TrialProblem::generate(cfg, &mut trial_rng.substream(STREAM_TARGET)) {
        Ok(p) => p,
        Err(e) => {
            warn!("trial {trial}: target generation failed: {e}");
            for &alg in &cfg.algorithms {
                for &sigma in &cfg.sigmas {
                    records.push(MetricsRecord::failed(trial, alg, sigma, e.to_string()));
                }
            }
            return (records, diagnostics);
        }
    };
    let fingerprint = problem.fingerprint();
    // Every (algorithm, σ) starts from this stream: same locations, same noise.
    let sampler_rng = trial_rng.substream(STREAM_SAMPLER);

    for &alg in &cfg.algorithms {
        for &sigma in &cfg.sigmas {
            debug!("trial {trial} {alg} sigma={sigma} target={fingerprint:016x}");
            let started = Instant::now();
            let result = problem.sample(cfg, alg, sigma, &sampler_rng);
            let elapsed = started.elapsed().as_secs_f64();
            let mut record = MetricsRecord::new(trial, alg, sigma);
            let scored = result.and_then(|out| {
                problem.score(&mut record, &out, cfg.burn_in_for(alg))?;
                Ok(out)
            });
            match scored {
                Ok(out) => {
                    if cfg.record_runtime {
                        record.runtime_seconds = Some(elapsed);
                    }
                    if keep_diagnostics {
                        diagnostics.extend(out.diagnostics.iter().map(|d| DiagnosticRow {
                            trial,
                            algorithm: alg,
                            sigma,
                            iteration: d.iteration,
                            loss: d.loss,
                            ess: d.ess,
                            wall_seconds: cfg.record_runtime.then_some(d.wall_seconds),
                        }));
                    }
                }
                Err(e) => {
                    warn!("trial {trial} {alg} sigma={sigma}: {e}");
                    record = MetricsRecord::failed(trial, alg, sigma, e.to_string());
                }
            }
            records.push(record);
        }
    }
    (records, diagnostics)
}

/// Runs every trial (concurrently) and every (algorithm, σ) within a trial
/// (sequentially). Failures are recorded in the row's error field.
pub fn run_experiment(cfg: &ExperimentConfig, keep_diagnostics: bool) -> Result<ExperimentOutput> {
    cfg.validate()?;
    info!(
        "{} experiment: d={}, N={}, K={}, J={}, {} trials",
        cfg.experiment, cfg.dimension, cfg.n_proposals, cfg.samples_per_proposal, cfg.iterations, cfg.trials
    );
    let per_trial: Vec<_> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t, keep_diagnostics))
        .collect();
    let mut out = ExperimentOutput::default();
    for (records, diagnostics) in per_trial {
        out.records.extend(records);
        out.diagnostics.extend(diagnostics);
    }
    out.records.sort_by(|a, b| {
        (a.trial, a.algorithm)
            .cmp(&(b.trial, b.algorithm))
            .then(a.sigma.total_cmp(&b.sigma))
    });
    out.diagnostics.sort_by(|a, b| {
        (a.trial, a.algorithm)
            .cmp(&(b.trial, b.algorithm))
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.iteration.cmp(&b.iteration))
    });
    Ok(out)
}
