//! Self-normalized importance sampling estimators and benchmark metrics.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::numkit::{log_sum_exp, squared_norm};
use crate::samplers::{Algorithm, SamplerOutput};
use crate::targets::{log_likelihood_point, LabeledData};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SnisEstimate {
    pub mean: Vec<f64>,
    /// Arithmetic mean of the unnormalized weights.
    pub evidence: f64,
    pub ess: f64,
    pub sample_count: usize,
}

fn check_log_weights(log_weights: &[f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return Err(Error::Empty("no weighted samples"));
    }
    if let Some(w) = log_weights.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
        return Err(Error::DegenerateWeights(format!("log weight {w}")));
    }
    let lse = log_sum_exp(log_weights)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    Ok(lse)
}

/// `(Σω)² / Σω²`, computed from log weights.
pub fn ess_from_log_weights(log_weights: &[f64]) -> Result<f64> {
    let lse = check_log_weights(log_weights)?;
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    let ess = (2.0 * lse - log_sum_exp(&doubled)?).exp();
    // Rounding can nudge the value just outside [1, S].
    Ok(ess.clamp(1.0, log_weights.len() as f64))
}

/// `(Σω)² / Σω²` for non-negative weights with a positive sum.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Empty("ess of an empty weight vector"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::DegenerateWeights("weights must be finite and non-negative".into()));
    }
    let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    ess_from_log_weights(&logs)
}

/// SNIS estimate of the mean from points and their unnormalized log weights.
pub fn snis(points: &[&[f64]], log_weights: &[f64]) -> Result<SnisEstimate> {
    Error::check_dim(points.len(), log_weights.len())?;
    let lse = check_log_weights(log_weights)?;
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for (x, lw) in points.iter().zip(log_weights) {
        Error::check_dim(d, x.len())?;
        let w = (lw - lse).exp();
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += w * v;
        }
    }
    let count = points.len();
    let evidence = (lse - (count as f64).ln()).exp();
    if !(mean.iter().all(|m| m.is_finite()) && evidence.is_finite()) {
        return Err(Error::DegenerateWeights("non-finite estimate".into()));
    }
    Ok(SnisEstimate {
        mean,
        evidence,
        ess: ess_from_log_weights(log_weights)?,
        sample_count: count,
    })
}

fn pooled(output: &SamplerOutput, burn_in: usize) -> (Vec<&[f64]>, Vec<f64>) {
    output
        .after_burn_in(burn_in)
        .map(|s| (s.point.as_slice(), s.log_weight))
        .unzip()
}

/// SNIS over every sample from iterations `>= burn_in`, pooled across iterations.
pub fn snis_mean(output: &SamplerOutput, burn_in: usize) -> Result<SnisEstimate> {
    let (points, log_weights) = pooled(output, burn_in);
    snis(&points, &log_weights)
}

/// `‖estimate − truth‖²`, summed over coordinates.
pub fn mse_mean_estimate(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    Error::check_dim(truth.len(), estimate.len())?;
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum())
}

/// `‖estimate − truth‖² / ‖truth‖²`.
pub fn relative_mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    let norm = squared_norm(truth);
    if norm == 0.0 {
        return Err(Error::InvalidArgument("relative error against a zero vector".into()));
    }
    Ok(mse_mean_estimate(estimate, truth)? / norm)
}

/// Average over the test set of `log Σₛ ω̄ₛ p(yᵢ | zᵢ, xₛ)`.
pub fn predictive_log_likelihood(points: &[&[f64]], log_weights: &[f64], test: &LabeledData) -> Result<f64> {
    Error::check_dim(points.len(), log_weights.len())?;
    if test.is_empty() {
        return Err(Error::Empty("empty test set"));
    }
    let lse = check_log_weights(log_weights)?;
    let normalized: Vec<f64> = log_weights.iter().map(|w| w - lse).collect();
    let mut terms = vec![0.0; points.len()];
    let mut total = 0.0;
    for (i, &y) in test.labels.iter().enumerate() {
        let z = test.design.row(i);
        for ((t, x), lw) in terms.iter_mut().zip(points).zip(&normalized) {
            *t = lw + log_likelihood_point(z, y, x);
        }
        total += log_sum_exp(&terms)?;
    }
    Ok(total / test.len() as f64)
}

pub fn test_log_likelihood(output: &SamplerOutput, test: &LabeledData, burn_in: usize) -> Result<f64> {
    let (points, log_weights) = pooled(output, burn_in);
    predictive_log_likelihood(&points, &log_weights, test)
}

/// Two-sided paired Wilcoxon signed-rank test, normal approximation.
///
/// Zero differences are dropped, tied magnitudes share mid-ranks and the variance
/// carries the usual tie correction. No continuity correction is applied.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    Error::check_dim(a.len(), b.len())?;
    if a.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "Wilcoxon test needs at least 6 pairs, got {}",
            a.len()
        )));
    }
    let mut diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidArgument("NaN in paired observations".into()));
    }
    if diffs.is_empty() {
        return Ok(1.0);
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    let n = diffs.len();
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && diffs[j].abs() == diffs[i].abs() {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let rank = (i + 1 + j) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        w_plus += rank * diffs[i..j].iter().filter(|d| **d > 0.0).count() as f64;
        i = j;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = (w_plus - mean) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z.abs())).min(1.0))
}

/// One benchmark run: a single (trial, algorithm, σ).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub mse: Option<f64>,
    pub relative_mse: Option<f64>,
    pub test_log_likelihood: Option<f64>,
    pub ess: Option<f64>,
    pub runtime_seconds: Option<f64>,
    pub error: Option<String>,
}

impl MetricsRecord {
    /// A record with no metrics filled in yet.
    pub fn new(trial: usize, algorithm: Algorithm, sigma: f64) -> Self {
        MetricsRecord {
            trial,
            algorithm,
            sigma,
            mse: None,
            relative_mse: None,
            test_log_likelihood: None,
            ess: None,
            runtime_seconds: None,
            error: None,
        }
    }

    pub fn failed(trial: usize, algorithm: Algorithm, sigma: f64, error: String) -> Self {
        MetricsRecord {
            error: Some(error),
            ..MetricsRecord::new(trial, algorithm, sigma)
        }
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }
}
