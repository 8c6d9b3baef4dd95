use rayon::prelude::*;

use crate::flow::RealNvpFlow;
use crate::numkit::{log_sum_exp, mvn_from_noise, mvn_log_density, CholeskyFactor, RngStream};
use crate::targets::TargetDensity;
use crate::{Error, Result};

// Samples per reduction chunk. Fixed so the summation order (and therefore every
// bit of the gradient) does not depend on the worker count.
const CHUNK: usize = 8;

/// Standard-normal base noise for `N` proposals × `K` draws; row `n·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNoise {
    proposals: usize,
    per_proposal: usize,
    draws: Vec<Vec<f64>>,
}

impl BaseNoise {
    pub fn new(proposals: usize, per_proposal: usize, draws: Vec<Vec<f64>>) -> Result<Self> {
        Error::check_dim(proposals * per_proposal, draws.len())?;
        if proposals == 0 || per_proposal == 0 {
            return Err(Error::Empty("noise batch needs N >= 1 and K >= 1"));
        }
        Ok(BaseNoise {
            proposals,
            per_proposal,
            draws,
        })
    }

    /// Draws `K` vectors from each proposal's own stream, in proposal order.
    pub fn draw(streams: &mut [RngStream], per_proposal: usize, dim: usize) -> Result<Self> {
        let draws = streams
            .iter_mut()
            .flat_map(|rng| (0..per_proposal).map(move |_| rng.normal_vec(dim)).collect::<Vec<_>>())
            .collect();
        Self::new(streams.len(), per_proposal, draws)
    }

    pub fn proposals(&self) -> usize {
        self.proposals
    }

    pub fn per_proposal(&self) -> usize {
        self.per_proposal
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn get(&self, proposal: usize, k: usize) -> &[f64] {
        &self.draws[proposal * self.per_proposal + k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.draws
    }

    /// Proposal that produced row `s`.
    pub fn origin(&self, s: usize) -> usize {
        s / self.per_proposal
    }
}

/// The reparameterized draws of one iteration: `x' = μₙ + Lₙ·ε`, `x = T(x')`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub base_points: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub log_dets: Vec<f64>,
    /// Unnormalized log DM weights `log π(x) − log[(1/N) Σ_l q_l(x)]`.
    pub log_weights: Vec<f64>,
}

/// Value of the Monte Carlo KL loss and its gradient w.r.t. every location and the
/// shared flow parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad_mu: Vec<Vec<f64>>,
    pub grad_phi: Vec<f64>,
    pub batch: SampleBatch,
}

/// `−(1/S) Σ log ωₛ`. A non-finite log weight (a zero or infinite weight) is an error.
pub fn kl_loss(log_weights: &[f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return Err(Error::Empty("kl_loss over an empty batch"));
    }
    if let Some(s) = log_weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::DegenerateWeights(format!(
            "sample {s} has log weight {}",
            log_weights[s]
        )));
    }
    Ok(-log_weights.iter().sum::<f64>() / log_weights.len() as f64)
}

struct ChunkResult {
    grad_mu: Vec<Vec<f64>>,
    grad_phi: Vec<f64>,
    base_points: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    log_dets: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Exact reparameterization gradient of the KL loss with the flow shared across
/// proposals and fixed base covariances.
///
/// For each draw, `log ω = log π(T(x')) + log|det J(x')| − log[(1/N) Σ_l N(x'; μ_l, Σ_l)]`.
/// Derivatives flow through the target score into `T`, through the log-determinant
/// into the flow parameters, and through the base-space mixture into the sample's
/// own location and into every `μ_l` of the denominator.
pub fn loss_and_gradient<T: TargetDensity + ?Sized>(
    target: &T,
    flow: &RealNvpFlow,
    mus: &[Vec<f64>],
    chols: &[CholeskyFactor],
    noise: &BaseNoise,
) -> Result<LossGradient> {
    gradient_impl(target, flow, mus, chols, noise, true)
}

pub(crate) fn gradient_impl<T: TargetDensity + ?Sized>(
    target: &T,
    flow: &RealNvpFlow,
    mus: &[Vec<f64>],
    chols: &[CholeskyFactor],
    noise: &BaseNoise,
    denominator_locations: bool,
) -> Result<LossGradient> {
    let n_prop = mus.len();
    Error::check_dim(n_prop, chols.len())?;
    Error::check_dim(n_prop, noise.proposals())?;
    let d = flow.dim();
    Error::check_dim(d, target.dim())?;
    let n_params = flow.param_count();
    let log_n = (n_prop as f64).ln();
    let total = noise.len();

    let chunks: Vec<ChunkResult> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = ChunkResult {
                grad_mu: vec![vec![0.0; d]; n_prop],
                grad_phi: vec![0.0; n_params],
                base_points: Vec::new(),
                points: Vec::new(),
                log_dets: Vec::new(),
                log_weights: Vec::new(),
            };
            let mut comps = vec![0.0; n_prop];
            for s in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let n = noise.origin(s);
                let base = mvn_from_noise(&mus[n], &chols[n], &noise.rows()[s])?;
                let trace = flow.forward_traced(&base)?;
                let (log_pi, score) = target.log_density_and_grad(&trace.output)?;
                for (l, comp) in comps.iter_mut().enumerate() {
                    *comp = mvn_log_density(&base, &mus[l], &chols[l])?;
                }
                let lse = log_sum_exp(&comps)?;
                let log_w = log_pi + trace.log_det - (lse - log_n);
                if !log_w.is_finite() {
                    return Err(Error::NonFiniteGradient { sample: s });
                }

                let mut g_base = flow.backward(&trace, &score, 1.0, &mut out.grad_phi);
                for (l, comp) in comps.iter().enumerate() {
                    let r = (comp - lse).exp();
                    if r == 0.0 {
                        continue;
                    }
                    let diff: Vec<f64> = base.iter().zip(&mus[l]).map(|(a, b)| a - b).collect();
                    let v = chols[l].solve(&diff)?;
                    for (g, vi) in g_base.iter_mut().zip(&v) {
                        *g += r * vi;
                    }
                    if denominator_locations {
                        for (g, vi) in out.grad_mu[l].iter_mut().zip(&v) {
                            *g -= r * vi;
                        }
                    }
                }
                if !(g_base.iter().all(|v| v.is_finite()) && out.grad_phi.iter().all(|v| v.is_finite())) {
                    return Err(Error::NonFiniteGradient { sample: s });
                }
                for (g, v) in out.grad_mu[n].iter_mut().zip(&g_base) {
                    *g += v;
                }
                out.base_points.push(base);
                out.points.push(trace.output);
                out.log_dets.push(trace.log_det);
                out.log_weights.push(log_w);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    // The chunk sums hold ∂(Σ log ω); the loss is −mean(log ω).
    let scale = -1.0 / total as f64;
    let mut grad_mu = vec![vec![0.0; d]; n_prop];
    let mut grad_phi = vec![0.0; n_params];
    let mut batch = SampleBatch {
        base_points: Vec::with_capacity(total),
        points: Vec::with_capacity(total),
        log_dets: Vec::with_capacity(total),
        log_weights: Vec::with_capacity(total),
    };
    for chunk in chunks {
        for (acc, part) in grad_mu.iter_mut().zip(&chunk.grad_mu) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        for (a, p) in grad_phi.iter_mut().zip(&chunk.grad_phi) {
            *a += p;
        }
        batch.base_points.extend(chunk.base_points);
        batch.points.extend(chunk.points);
        batch.log_dets.extend(chunk.log_dets);
        batch.log_weights.extend(chunk.log_weights);
    }
    grad_mu.iter_mut().flatten().for_each(|g| *g *= scale);
    grad_phi.iter_mut().for_each(|g| *g *= scale);
    let loss = kl_loss(&batch.log_weights)?;
    Ok(LossGradient {
        loss,
        grad_mu,
        grad_phi,
        batch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{cholesky, sample_dirichlet, Matrix};
    use crate::targets::testing::Shifted;
    use crate::targets::GaussianMixtureTarget;
    use approx::assert_abs_diff_eq;

    fn random_gmm(rng: &mut RngStream, d: usize, p: usize) -> GaussianMixtureTarget {
        let w = sample_dirichlet(rng, &vec![3.0; p]).unwrap();
        let means = (0..p).map(|_| (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        let covs = (0..p)
            .map(|_| {
                let a = Matrix::from_vec(d, d, rng.normal_vec(d * d)).unwrap();
                a.matmul(&a.transpose()).unwrap().add(&Matrix::scaled_identity(d, 1.0)).unwrap()
            })
            .collect();
        GaussianMixtureTarget::new(w, means, covs).unwrap()
    }

    struct Setup {
        target: GaussianMixtureTarget,
        flow: RealNvpFlow,
        mus: Vec<Vec<f64>>,
        chols: Vec<CholeskyFactor>,
        noise: BaseNoise,
    }

    fn setup(seed: u64, d: usize, n: usize, k: usize, hidden: &[usize]) -> Setup {
        let mut rng = RngStream::new(seed, 0);
        let target = random_gmm(&mut rng, d, 3);
        let flow = RealNvpFlow::identity(d, hidden).unwrap().xavier_init(&mut rng);
        let p: Vec<f64> = flow.params().iter().map(|v| v + 0.1 * rng.standard_normal()).collect();
        let flow = flow.with_params(&p).unwrap();
        let mus = (0..n).map(|_| (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect()).collect();
        let chols = (0..n)
            .map(|_| {
                let a = Matrix::from_vec(d, d, rng.normal_vec(d * d)).unwrap();
                let m = a.matmul(&a.transpose()).unwrap().add(&Matrix::scaled_identity(d, 0.5)).unwrap();
                cholesky(&m).unwrap()
            })
            .collect();
        let mut streams: Vec<RngStream> = (0..n as u64).map(|i| rng.substream(i)).collect();
        let noise = BaseNoise::draw(&mut streams, k, d).unwrap();
        Setup {
            target,
            flow,
            mus,
            chols,
            noise,
        }
    }

    fn loss_at(s: &Setup, mus: &[Vec<f64>], flow: &RealNvpFlow) -> f64 {
        loss_and_gradient(&s.target, flow, mus, &s.chols, &s.noise).unwrap().loss
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..5 {
            let s = setup(100 + seed, 3, 2, 2, &[3, 3]);
            let g = loss_and_gradient(&s.target, &s.flow, &s.mus, &s.chols, &s.noise).unwrap();
            for n in 0..2 {
                for i in 0..3 {
                    let mut mp = s.mus.clone();
                    mp[n][i] += h;
                    let up = loss_at(&s, &mp, &s.flow);
                    mp[n][i] -= 2.0 * h;
                    let dn = loss_at(&s, &mp, &s.flow);
                    let fd = (up - dn) / (2.0 * h);
                    assert!(rel_err(g.grad_mu[n][i], fd) < 1e-5, "mu[{n}][{i}]: {} vs {fd}", g.grad_mu[n][i]);
                }
            }
            let p = s.flow.params();
            for k in 0..p.len() {
                let mut q = p.clone();
                q[k] += h;
                let up = loss_at(&s, &s.mus, &s.flow.with_params(&q).unwrap());
                q[k] -= 2.0 * h;
                let dn = loss_at(&s, &s.mus, &s.flow.with_params(&q).unwrap());
                let fd = (up - dn) / (2.0 * h);
                assert!(rel_err(g.grad_phi[k], fd) < 1e-5, "phi[{k}]: {} vs {fd}", g.grad_phi[k]);
            }
        }
    }

    #[test]
    fn denominator_term_matters() {
        let s = setup(7, 3, 3, 2, &[3]);
        let full = gradient_impl(&s.target, &s.flow, &s.mus, &s.chols, &s.noise, true).unwrap();
        let cut = gradient_impl(&s.target, &s.flow, &s.mus, &s.chols, &s.noise, false).unwrap();
        let diff = full
            .grad_mu
            .iter()
            .flatten()
            .zip(cut.grad_mu.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff > 1e-8, "{diff}");
        assert_eq!(full.grad_phi, cut.grad_phi);
    }

    #[test]
    fn constant_shift_changes_only_loss() {
        let s = setup(8, 3, 2, 3, &[3, 3]);
        let a = loss_and_gradient(&s.target, &s.flow, &s.mus, &s.chols, &s.noise).unwrap();
        let shifted = Shifted(s.target.clone(), 2.5);
        let b = loss_and_gradient(&shifted, &s.flow, &s.mus, &s.chols, &s.noise).unwrap();
        assert_abs_diff_eq!(b.loss, a.loss - 2.5, epsilon = 1e-12);
        assert_eq!(a.grad_mu, b.grad_mu);
        assert_eq!(a.grad_phi, b.grad_phi);
    }

    #[test]
    fn identical_distributions_have_zero_loss() {
        let d = 2;
        let q = Matrix::from_rows(&[vec![1.5, 0.2], vec![0.2, 0.8]]).unwrap();
        let mu = vec![0.5, -1.0];
        let target = GaussianMixtureTarget::new(vec![1.0], vec![mu.clone()], vec![q.clone()]).unwrap();
        let flow = RealNvpFlow::identity(d, &[4]).unwrap();
        let chol = cholesky(&q).unwrap();
        let mut streams = vec![RngStream::new(1, 1)];
        let noise = BaseNoise::draw(&mut streams, 16, d).unwrap();
        let g = loss_and_gradient(&target, &flow, std::slice::from_ref(&mu), std::slice::from_ref(&chol), &noise).unwrap();
        assert_eq!(g.loss, 0.0);
        let c = 3.0f64;
        let g = loss_and_gradient(&Shifted(target, c.ln()), &flow, &[mu], &[chol], &noise).unwrap();
        assert_abs_diff_eq!(g.loss, -c.ln(), epsilon = 1e-12);
    }

    #[test]
    fn location_gradient_vanishes_in_expectation_at_optimum() {
        let d = 2;
        let q = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let mu = vec![1.0, 2.0];
        let target = GaussianMixtureTarget::new(vec![1.0], vec![mu.clone()], vec![q.clone()]).unwrap();
        let flow = RealNvpFlow::identity(d, &[4]).unwrap();
        let chol = cholesky(&q).unwrap();
        let root = RngStream::new(55, 0);
        let batches = 10_000;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for b in 0..batches {
            let mut streams = vec![root.substream(b)];
            let noise = BaseNoise::draw(&mut streams, 4, d).unwrap();
            let g = loss_and_gradient(&target, &flow, std::slice::from_ref(&mu), std::slice::from_ref(&chol), &noise).unwrap();
            for i in 0..d {
                sum[i] += g.grad_mu[0][i];
                sum_sq[i] += g.grad_mu[0][i] * g.grad_mu[0][i];
            }
        }
        let nb = batches as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nb).collect();
        let se2: f64 = (0..d).map(|i| (sum_sq[i] / nb - mean[i] * mean[i]) / nb).sum();
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        assert!(norm < 3.0 * se2.sqrt(), "norm {norm} se {}", se2.sqrt());
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let s = setup(9, 3, 3, 2, &[3]);
        let a = loss_and_gradient(&s.target, &s.flow, &s.mus, &s.chols, &s.noise).unwrap();
        let order = [2, 0, 1];
        let mus: Vec<_> = order.iter().map(|&i| s.mus[i].clone()).collect();
        let chols: Vec<_> = order.iter().map(|&i| s.chols[i].clone()).collect();
        let rows: Vec<_> = order
            .iter()
            .flat_map(|&i| (0..2).map(move |k| (i, k)))
            .map(|(i, k)| s.noise.get(i, k).to_vec())
            .collect();
        let noise = BaseNoise::new(3, 2, rows).unwrap();
        let b = loss_and_gradient(&s.target, &s.flow, &mus, &chols, &noise).unwrap();
        assert_abs_diff_eq!(a.loss, b.loss, epsilon = 1e-12);
        for (j, &i) in order.iter().enumerate() {
            for (x, y) in a.grad_mu[i].iter().zip(&b.grad_mu[j]) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kl_loss_errors() {
        assert!(kl_loss(&[]).is_err());
        assert!(kl_loss(&[0.0, f64::NEG_INFINITY]).is_err());
        assert_eq!(kl_loss(&[1.0, 3.0]).unwrap(), -2.0);
    }

    #[test]
    fn batch_is_consistent_with_flow() {
        let s = setup(10, 3, 2, 2, &[3]);
        let g = loss_and_gradient(&s.target, &s.flow, &s.mus, &s.chols, &s.noise).unwrap();
        for (sidx, (base, x)) in g.batch.base_points.iter().zip(&g.batch.points).enumerate() {
            let n = s.noise.origin(sidx);
            let expect = mvn_from_noise(&s.mus[n], &s.chols[n], &s.noise.rows()[sidx]).unwrap();
            assert_eq!(base, &expect);
            let (fx, ld) = s.flow.forward(base).unwrap();
            assert_eq!(x, &fx);
            assert_eq!(g.batch.log_dets[sidx], ld);
        }
    }
}
