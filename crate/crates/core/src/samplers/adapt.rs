use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::ProposalSet;
use crate::gradkit::{LossGradient, RmsPropState};
use crate::numkit::RngStream;
use crate::targets::TargetDensity;
use crate::{Error, Result};

pub const MAX_HALVINGS: usize = 10;

fn resampling_distribution(log_weights: &[f64]) -> Result<WeightedIndex<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights(format!(
            "cannot resample, largest log weight is {max}"
        )));
    }
    let probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    WeightedIndex::new(&probs).map_err(|e| Error::DegenerateWeights(e.to_string()))
}

/// Multinomial resampling of `count` new locations from the whole weighted pool.
pub fn adapt_resample_global(
    log_weights: &[f64],
    points: &[Vec<f64>],
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    Error::check_dim(points.len(), log_weights.len())?;
    let dist = resampling_distribution(log_weights)?;
    Ok((0..count).map(|_| points[dist.sample(rng)].clone()).collect())
}

/// One new location per proposal, resampled from that proposal's own `K` samples.
/// Points are grouped as consecutive runs of `per_proposal`.
pub fn adapt_resample_local(
    log_weights: &[f64],
    points: &[Vec<f64>],
    per_proposal: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    Error::check_dim(points.len(), log_weights.len())?;
    if per_proposal == 0 || !points.len().is_multiple_of(per_proposal) {
        return Err(Error::InvalidArgument(format!(
            "{} samples do not split into groups of {per_proposal}",
            points.len()
        )));
    }
    points
        .chunks(per_proposal)
        .zip(log_weights.chunks(per_proposal))
        .map(|(group, w)| {
            if per_proposal == 1 {
                return Ok(group[0].clone());
            }
            let dist = resampling_distribution(w)?;
            Ok(group[dist.sample(rng)].clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinMove {
    pub locations: Vec<Vec<f64>>,
    /// Step size accepted for each location after backtracking.
    pub steps: Vec<f64>,
}

/// `μ ← μ + (h²/2)·∇log π(μ) + h·ξ`.
///
/// Per location, `h` is halved (at most [`MAX_HALVINGS`] times) while the drift-only
/// move lowers `log π`. `noise = None` drops the `h·ξ` term.
pub fn adapt_langevin<T: TargetDensity + ?Sized>(
    locations: &[Vec<f64>],
    target: &T,
    step: f64,
    mut noise: Option<&mut RngStream>,
) -> Result<LangevinMove> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("Langevin step must be positive, got {step}")));
    }
    let mut out = LangevinMove {
        locations: Vec::with_capacity(locations.len()),
        steps: Vec::with_capacity(locations.len()),
    };
    for (n, mu) in locations.iter().enumerate() {
        let (lp, grad) = target.log_density_and_grad(mu)?;
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGradient { sample: n });
        }
        let drift = |h: f64| -> Vec<f64> {
            mu.iter().zip(&grad).map(|(m, g)| m + 0.5 * h * h * g).collect()
        };
        let mut h = step;
        for _ in 0..MAX_HALVINGS {
            let moved = target.log_density(&drift(h))?;
            if moved >= lp {
                break;
            }
            h *= 0.5;
        }
        let mut next = drift(h);
        if let Some(rng) = noise.as_deref_mut() {
            for v in next.iter_mut() {
                *v += h * rng.standard_normal();
            }
        }
        out.locations.push(next);
        out.steps.push(h);
    }
    Ok(out)
}

/// One RMSprop step on `[μ₁ … μ_N, φ]` using a precomputed loss gradient.
/// Base covariances are left untouched.
pub fn adapt_nf(proposals: &mut ProposalSet, gradient: &LossGradient, optimizer: &mut RmsPropState) -> Result<()> {
    let flow = proposals
        .shared_flow
        .as_mut()
        .ok_or_else(|| Error::InvalidArgument("flow adaptation needs a shared flow".into()))?;
    Error::check_dim(proposals.locations.len(), gradient.grad_mu.len())?;
    let mut params: Vec<f64> = proposals.locations.iter().flatten().copied().collect();
    params.extend(flow.params());
    let mut grad: Vec<f64> = gradient.grad_mu.iter().flatten().copied().collect();
    grad.extend_from_slice(&gradient.grad_phi);
    optimizer.step(&mut params, &grad)?;

    let d = flow.dim();
    let (locs, phi) = params.split_at(proposals.locations.len() * d);
    for (mu, chunk) in proposals.locations.iter_mut().zip(locs.chunks(d)) {
        mu.copy_from_slice(chunk);
    }
    flow.set_params(phi)
}
