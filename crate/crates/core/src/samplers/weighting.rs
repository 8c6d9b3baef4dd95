use super::ProposalSet;
use crate::numkit::log_sum_exp;
use crate::targets::TargetDensity;
use crate::{Error, Result};

/// Standard importance weights `log π(x) − log q_n(x)`, each sample against the
/// proposal that produced it.
pub fn standard_weights<T: TargetDensity + ?Sized>(
    target: &T,
    proposals: &ProposalSet,
    points: &[Vec<f64>],
    origins: &[usize],
) -> Result<Vec<f64>> {
    Error::check_dim(points.len(), origins.len())?;
    points
        .iter()
        .zip(origins)
        .map(|(x, &n)| {
            let log_q = proposals.log_density(n, x)?;
            if log_q == f64::NEG_INFINITY {
                return Err(Error::DegenerateWeights(format!(
                    "proposal {n} has zero density at its own sample"
                )));
            }
            Ok(target.log_density(x)? - log_q)
        })
        .collect()
}

/// Deterministic-mixture weights `log π(x) − log[(1/N) Σ_l q_l(x)]`.
pub fn dm_weights<T: TargetDensity + ?Sized>(
    target: &T,
    proposals: &ProposalSet,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|x| {
            let log_mix = proposals.log_mixture_density(x)?;
            if log_mix == f64::NEG_INFINITY {
                return Err(Error::DegenerateWeights(
                    "mixture proposal has zero density at a sample".into(),
                ));
            }
            Ok(target.log_density(x)? - log_mix)
        })
        .collect()
}

/// Gaussian-proposal DM weights from the base-space component densities, the
/// path shared with the flow sampler when its flow is the identity.
pub(crate) fn gaussian_dm_weight(log_pi: f64, component_log_densities: &[f64]) -> Result<f64> {
    let lse = log_sum_exp(component_log_densities)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights(
            "mixture proposal has zero density at a sample".into(),
        ));
    }
    let log_n = (component_log_densities.len() as f64).ln();
    Ok(log_pi - (lse - log_n))
}
