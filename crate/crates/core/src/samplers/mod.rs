//! The generic adaptive importance sampling loop.
//!
//! Every iteration draws `K` samples from each of `N` proposals, weights them, and
//! adapts the proposals. The algorithm id picks the weighting and adaptation pair:
//!
//! | id       | weighting | adaptation                                  |
//! |----------|-----------|---------------------------------------------|
//! | `pmc`    | standard  | global resampling, `K = 1`, `K·J` iterations |
//! | `gr-pmc` | DM        | global resampling                           |
//! | `lr-pmc` | DM        | per-proposal resampling                     |
//! | `sl-pmc` | DM        | Langevin move with backtracking             |
//! | `nf-pmc` | DM        | RMSprop on the KL loss (locations + flow)   |

mod adapt;
mod weighting;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adapt::{
    adapt_langevin, adapt_nf, adapt_resample_global, adapt_resample_local, LangevinMove,
    MAX_HALVINGS,
};
pub use weighting::{dm_weights, standard_weights};

use crate::estimators::ess_from_log_weights;
use crate::flow::{RealNvpFlow, DEFAULT_HIDDEN};
use crate::gradkit::{loss_and_gradient, BaseNoise, RmsPropState, DEFAULT_DECAY, DEFAULT_STABILIZER};
use crate::numkit::{log_sum_exp, mvn_from_noise, mvn_log_density, CholeskyFactor, RngStream};
use crate::targets::TargetDensity;
use crate::{Error, Result};

// Substream tags under the run's stream.
const STREAM_INIT: u64 = 1;
const STREAM_PROPOSALS: u64 = 2;
const STREAM_ADAPT: u64 = 3;
const STREAM_FLOW: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Pmc,
    GrPmc,
    LrPmc,
    SlPmc,
    NfPmc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Pmc,
        Algorithm::GrPmc,
        Algorithm::LrPmc,
        Algorithm::SlPmc,
        Algorithm::NfPmc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Pmc => "pmc",
            Algorithm::GrPmc => "gr-pmc",
            Algorithm::LrPmc => "lr-pmc",
            Algorithm::SlPmc => "sl-pmc",
            Algorithm::NfPmc => "nf-pmc",
        }
    }

    pub fn uses_dm_weights(self) -> bool {
        self != Algorithm::Pmc
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.id().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowInit {
    Xavier,
    /// All-zero nets: the flow starts as the identity map.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisConfig {
    pub algorithm: Algorithm,
    /// `N`
    pub proposals: usize,
    /// `K`
    pub samples_per_proposal: usize,
    /// `J`
    pub iterations: usize,
    /// Base scales are `σ²I`.
    pub sigma: f64,
    pub init_box: (f64, f64),
    pub base_lr: f64,
    pub rms_decay: f64,
    pub rms_stabilizer: f64,
    pub hidden: Vec<usize>,
    pub flow_init: FlowInit,
    pub langevin_step: f64,
    pub langevin_noise: bool,
    /// `false` freezes the proposals (static multiple importance sampling).
    pub adapt: bool,
}

impl AisConfig {
    pub fn new(algorithm: Algorithm, proposals: usize, samples_per_proposal: usize, iterations: usize, sigma: f64) -> Self {
        AisConfig {
            algorithm,
            proposals,
            samples_per_proposal,
            iterations,
            sigma,
            init_box: (-10.0, 10.0),
            base_lr: 0.005,
            rms_decay: DEFAULT_DECAY,
            rms_stabilizer: DEFAULT_STABILIZER,
            hidden: DEFAULT_HIDDEN.to_vec(),
            flow_init: FlowInit::Xavier,
            langevin_step: 1.0,
            langevin_noise: true,
            adapt: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.proposals == 0 || self.samples_per_proposal == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument("N, K and J must all be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.init_box.0 < self.init_box.1) {
            return Err(Error::InvalidArgument("init box must have low < high".into()));
        }
        if self.algorithm == Algorithm::NfPmc && !(self.base_lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.algorithm == Algorithm::SlPmc && !(self.langevin_step > 0.0) {
            return Err(Error::InvalidArgument("Langevin step must be positive".into()));
        }
        Ok(())
    }

    /// `(K, J)` actually run: PMC draws one sample per proposal for `K·J` iterations.
    pub fn schedule(&self) -> (usize, usize) {
        if self.algorithm == Algorithm::Pmc {
            (1, self.samples_per_proposal * self.iterations)
        } else {
            (self.samples_per_proposal, self.iterations)
        }
    }

    pub fn total_samples(&self) -> usize {
        let (k, j) = self.schedule();
        self.proposals * k * j
    }
}

/// Adaptive proposal state: locations, fixed base scales, optional shared flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub locations: Vec<Vec<f64>>,
    pub scale_chols: Vec<CholeskyFactor>,
    pub shared_flow: Option<RealNvpFlow>,
    pub iteration: usize,
}

impl ProposalSet {
    pub fn new(locations: Vec<Vec<f64>>, scale_chols: Vec<CholeskyFactor>, shared_flow: Option<RealNvpFlow>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::Empty("proposal set needs at least one proposal"));
        }
        Error::check_dim(locations.len(), scale_chols.len())?;
        let d = locations[0].len();
        for (m, c) in locations.iter().zip(&scale_chols) {
            Error::check_dim(d, m.len())?;
            Error::check_dim(d, c.dim())?;
        }
        if let Some(f) = &shared_flow {
            Error::check_dim(d, f.dim())?;
        }
        Ok(ProposalSet {
            locations,
            scale_chols,
            shared_flow,
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    /// `log q_n(x)`.
    pub fn log_density(&self, n: usize, x: &[f64]) -> Result<f64> {
        match &self.shared_flow {
            Some(flow) => flow.log_density(x, &self.locations[n], &self.scale_chols[n]),
            None => mvn_log_density(x, &self.locations[n], &self.scale_chols[n]),
        }
    }

    /// `log[(1/N) Σ_l q_l(x)]`. With a shared flow the point is inverted once.
    pub fn log_mixture_density(&self, x: &[f64]) -> Result<f64> {
        let (base, log_det_inv) = match &self.shared_flow {
            Some(flow) => flow.inverse(x)?,
            None => (x.to_vec(), 0.0),
        };
        let comps = self
            .locations
            .iter()
            .zip(&self.scale_chols)
            .map(|(m, c)| mvn_log_density(&base, m, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&comps)? - (self.len() as f64).ln() + log_det_inv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub point: Vec<f64>,
    pub log_weight: f64,
    pub proposal: usize,
    pub iteration: usize,
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// KL loss estimate (nf-pmc only).
    pub loss: Option<f64>,
    pub ess: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    pub algorithm: Algorithm,
    pub samples: Vec<WeightedSample>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub final_proposals: ProposalSet,
}

impl SamplerOutput {
    pub fn log_weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.log_weight).collect()
    }

    /// Samples from iterations `>= burn_in` only.
    pub fn after_burn_in(&self, burn_in: usize) -> impl Iterator<Item = &WeightedSample> {
        self.samples.iter().filter(move |s| s.iteration >= burn_in)
    }
}

fn initial_proposals(config: &AisConfig, dim: usize, rng: &RngStream) -> Result<ProposalSet> {
    let mut init = rng.substream(STREAM_INIT);
    let (lo, hi) = config.init_box;
    let locations = (0..config.proposals)
        .map(|_| (0..dim).map(|_| init.uniform(lo, hi)).collect())
        .collect();
    let chol = CholeskyFactor::isotropic(dim, config.sigma)?;
    let flow = if config.algorithm == Algorithm::NfPmc {
        let identity = RealNvpFlow::identity(dim, &config.hidden)?;
        Some(match config.flow_init {
            FlowInit::Xavier => identity.xavier_init(&mut rng.substream(STREAM_FLOW)),
            FlowInit::Identity => identity,
        })
    } else {
        None
    };
    ProposalSet::new(locations, vec![chol; config.proposals], flow)
}

/// Runs the sample → weight → adapt loop.
///
/// `rng` is only used to derive substreams, so every algorithm run from the same
/// stream starts from the same locations and, per proposal, consumes the same
/// base noise sequence.
pub fn run_ais<T: TargetDensity + ?Sized>(config: &AisConfig, target: &T, rng: &RngStream) -> Result<SamplerOutput> {
    config.validate()?;
    let dim = target.dim();
    let (per_proposal, iterations) = config.schedule();
    let mut proposals = initial_proposals(config, dim, rng)?;
    let proposal_root = rng.substream(STREAM_PROPOSALS);
    let mut streams: Vec<RngStream> = (0..config.proposals as u64)
        .map(|n| proposal_root.substream(n))
        .collect();
    let mut adapt_rng = rng.substream(STREAM_ADAPT);
    let mut optimizer = proposals.shared_flow.as_ref().map(|f| {
        RmsPropState::with_constants(
            config.proposals * dim + f.param_count(),
            config.base_lr,
            iterations,
            config.rms_decay,
            config.rms_stabilizer,
        )
    });

    let mut samples = Vec::with_capacity(config.total_samples());
    let mut diagnostics = Vec::with_capacity(iterations);
    for j in 0..iterations {
        let started = Instant::now();
        proposals.iteration = j;
        let noise = BaseNoise::draw(&mut streams, per_proposal, dim)?;
        let (points, log_weights, loss) = iterate(
            config,
            target,
            &mut proposals,
            &noise,
            optimizer.as_mut(),
            &mut adapt_rng,
        )
        .map_err(|e| e.at_iteration(j))?;

        let ess = ess_from_log_weights(&log_weights).map_err(|e| e.at_iteration(j))?;
        for (s, (point, log_weight)) in points.into_iter().zip(log_weights).enumerate() {
            samples.push(WeightedSample {
                point,
                log_weight,
                proposal: noise.origin(s),
                iteration: j,
                sample: s % per_proposal,
            });
        }
        diagnostics.push(IterationDiagnostics {
            iteration: j,
            loss,
            ess,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(SamplerOutput {
        algorithm: config.algorithm,
        samples,
        diagnostics,
        final_proposals: proposals,
    })
}

type IterationResult = (Vec<Vec<f64>>, Vec<f64>, Option<f64>);

fn iterate<T: TargetDensity + ?Sized>(
    config: &AisConfig,
    target: &T,
    proposals: &mut ProposalSet,
    noise: &BaseNoise,
    optimizer: Option<&mut RmsPropState>,
    adapt_rng: &mut RngStream,
) -> Result<IterationResult> {
    if let (Some(flow), Some(opt)) = (proposals.shared_flow.as_ref(), optimizer) {
        let grad = loss_and_gradient(target, flow, &proposals.locations, &proposals.scale_chols, noise)?;
        let loss = grad.loss;
        if config.adapt {
            adapt_nf(proposals, &grad, opt)?;
        }
        return Ok((grad.batch.points, grad.batch.log_weights, Some(loss)));
    }

    let points = noise
        .rows()
        .iter()
        .enumerate()
        .map(|(s, eps)| {
            let n = noise.origin(s);
            mvn_from_noise(&proposals.locations[n], &proposals.scale_chols[n], eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let log_weights = if config.algorithm.uses_dm_weights() {
        gaussian_dm_weights(target, proposals, &points)?
    } else {
        let origins: Vec<usize> = (0..points.len()).map(|s| noise.origin(s)).collect();
        standard_weights(target, proposals, &points, &origins)?
    };

    if config.adapt {
        let n = proposals.len();
        proposals.locations = match config.algorithm {
            Algorithm::Pmc | Algorithm::GrPmc => adapt_resample_global(&log_weights, &points, n, adapt_rng)?,
            Algorithm::LrPmc => adapt_resample_local(&log_weights, &points, noise.per_proposal(), adapt_rng)?,
            Algorithm::SlPmc => {
                let rng = config.langevin_noise.then_some(&mut *adapt_rng);
                adapt_langevin(&proposals.locations, target, config.langevin_step, rng)?.locations
            }
            Algorithm::NfPmc => unreachable!("flow proposals handled above"),
        };
    }
    Ok((points, log_weights, None))
}

fn gaussian_dm_weights<T: TargetDensity + ?Sized>(target: &T, proposals: &ProposalSet, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut comps = vec![0.0; proposals.len()];
    points
        .iter()
        .map(|x| {
            for (c, (m, l)) in comps.iter_mut().zip(proposals.locations.iter().zip(&proposals.scale_chols)) {
                *c = mvn_log_density(x, m, l)?;
            }
            weighting::gaussian_dm_weight(target.log_density(x)?, &comps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::snis_mean;
    use crate::numkit::Matrix;
    use crate::targets::{make_gmm_target, GaussianMixtureTarget};

    fn small_target() -> GaussianMixtureTarget {
        make_gmm_target(&mut RngStream::new(9, 9), 2, 2).unwrap()
    }

    #[test]
    fn sample_counts_match_for_all_algorithms() {
        let t = small_target();
        for alg in Algorithm::ALL {
            let cfg = AisConfig::new(alg, 4, 3, 5, 1.0);
            let out = run_ais(&cfg, &t, &RngStream::new(1, 0)).unwrap();
            assert_eq!(out.samples.len(), 4 * 3 * 5, "{alg}");
            assert_eq!(cfg.total_samples(), 60);
            let (_, j) = cfg.schedule();
            assert_eq!(out.diagnostics.len(), j);
            assert!(out.samples.iter().all(|s| s.log_weight.is_finite()));
            assert_eq!(out.diagnostics.iter().all(|d| d.loss.is_some()), alg == Algorithm::NfPmc);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let t = small_target();
        for alg in Algorithm::ALL {
            let cfg = AisConfig::new(alg, 3, 2, 4, 2.0);
            let a = run_ais(&cfg, &t, &RngStream::new(5, 1)).unwrap();
            let b = run_ais(&cfg, &t, &RngStream::new(5, 1)).unwrap();
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.final_proposals, b.final_proposals);
        }
    }

    #[test]
    fn frozen_proposals_emit_identical_points() {
        let t = small_target();
        let runs: Vec<SamplerOutput> = Algorithm::ALL
            .iter()
            .map(|&alg| {
                let mut cfg = AisConfig::new(alg, 3, 2, 4, 1.0);
                cfg.adapt = false;
                cfg.flow_init = FlowInit::Identity;
                run_ais(&cfg, &t, &RngStream::new(2, 0)).unwrap()
            })
            .collect();
        // PMC runs its draws one per iteration; compare per-proposal sequences.
        let per_proposal = |out: &SamplerOutput, n: usize| -> Vec<Vec<f64>> {
            out.samples.iter().filter(|s| s.proposal == n).map(|s| s.point.clone()).collect()
        };
        for n in 0..3 {
            let reference = per_proposal(&runs[1], n);
            for out in &runs {
                assert_eq!(per_proposal(out, n), reference, "{}", out.algorithm);
            }
        }
        // DM algorithms weight identically, including the identity-flow sampler.
        for out in &runs[2..] {
            assert_eq!(out.log_weights(), runs[1].log_weights(), "{}", out.algorithm);
        }
    }

    #[test]
    fn static_is_recovers_gaussian_mean() {
        let mu = vec![1.0, -2.0];
        let t = GaussianMixtureTarget::new(vec![1.0], vec![mu.clone()], vec![Matrix::identity(2)]).unwrap();
        let mut cfg = AisConfig::new(Algorithm::GrPmc, 1, 1000, 20, 2.0);
        cfg.adapt = false;
        cfg.init_box = (0.999, 1.0);
        let out = run_ais(&cfg, &t, &RngStream::new(3, 0)).unwrap();
        let est = snis_mean(&out, 0).unwrap();
        for (e, m) in est.mean.iter().zip(&mu) {
            assert!((e - m).abs() < 0.05, "{e} vs {m}");
        }
    }

    #[test]
    fn nf_one_step_matches_manual_update() {
        let t = small_target();
        let cfg = AisConfig::new(Algorithm::NfPmc, 3, 4, 1, 1.0);
        let rng = RngStream::new(6, 0);
        let out = run_ais(&cfg, &t, &rng).unwrap();

        let mut props = initial_proposals(&cfg, 2, &rng).unwrap();
        let mut streams: Vec<RngStream> = (0..3).map(|n| rng.substream(STREAM_PROPOSALS).substream(n)).collect();
        let noise = BaseNoise::draw(&mut streams, 4, 2).unwrap();
        let flow = props.shared_flow.clone().unwrap();
        let grad = loss_and_gradient(&t, &flow, &props.locations, &props.scale_chols, &noise).unwrap();
        let mut opt = RmsPropState::new(3 * 2 + flow.param_count(), cfg.base_lr, 1);
        let mut params: Vec<f64> = props.locations.iter().flatten().copied().collect();
        params.extend(flow.params());
        let mut g: Vec<f64> = grad.grad_mu.iter().flatten().copied().collect();
        g.extend(&grad.grad_phi);
        opt.step(&mut params, &g).unwrap();
        adapt_nf(&mut props, &grad, &mut RmsPropState::new(3 * 2 + flow.param_count(), cfg.base_lr, 1)).unwrap();
        let mut expect: Vec<f64> = props.locations.iter().flatten().copied().collect();
        expect.extend(props.shared_flow.as_ref().unwrap().params());
        assert_eq!(expect, params);
        let mut got: Vec<f64> = out.final_proposals.locations.iter().flatten().copied().collect();
        got.extend(out.final_proposals.shared_flow.as_ref().unwrap().params());
        assert_eq!(got, params);
    }

    #[test]
    fn nf_zero_gradient_leaves_proposals() {
        let t = small_target();
        let cfg = AisConfig::new(Algorithm::NfPmc, 2, 2, 1, 1.0);
        let mut props = initial_proposals(&cfg, 2, &RngStream::new(1, 1)).unwrap();
        let before = props.clone();
        let flow = props.shared_flow.clone().unwrap();
        let mut streams: Vec<RngStream> = (0..2).map(|n| RngStream::new(1, n)).collect();
        let noise = BaseNoise::draw(&mut streams, 2, 2).unwrap();
        let mut grad = loss_and_gradient(&t, &flow, &props.locations, &props.scale_chols, &noise).unwrap();
        grad.grad_mu.iter_mut().flatten().for_each(|g| *g = 0.0);
        grad.grad_phi.iter_mut().for_each(|g| *g = 0.0);
        adapt_nf(&mut props, &grad, &mut RmsPropState::new(4 + flow.param_count(), 0.1, 1)).unwrap();
        assert_eq!(props, before);
    }

    #[test]
    fn nf_loss_decreases_on_gaussian_target() {
        let t = GaussianMixtureTarget::new(
            vec![1.0],
            vec![vec![1.0, -1.0]],
            vec![Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap()],
        )
        .unwrap();
        let mut cfg = AisConfig::new(Algorithm::NfPmc, 5, 10, 200, 1.0);
        cfg.base_lr = 0.05;
        let out = run_ais(&cfg, &t, &RngStream::new(10, 0)).unwrap();
        let losses: Vec<f64> = out.diagnostics.iter().map(|d| d.loss.unwrap()).collect();
        let first: f64 = losses[..20].iter().sum::<f64>() / 20.0;
        let last: f64 = losses[180..].iter().sum::<f64>() / 20.0;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let t = small_target();
        for alg in Algorithm::ALL {
            let cfg = AisConfig::new(alg, 4, 3, 3, 1.0);
            let out = run_ais(&cfg, &t, &RngStream::new(4, 4)).unwrap();
            for j in 0..out.diagnostics.len() {
                let lw: Vec<f64> = out.samples.iter().filter(|s| s.iteration == j).map(|s| s.log_weight).collect();
                let lse = log_sum_exp(&lw).unwrap();
                let total: f64 = lw.iter().map(|w| (w - lse).exp()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(AisConfig::new(Algorithm::Pmc, 0, 1, 1, 1.0).validate().is_err());
        assert!(AisConfig::new(Algorithm::Pmc, 1, 1, 1, 0.0).validate().is_err());
        assert!("gr-pmc".parse::<Algorithm>().unwrap() == Algorithm::GrPmc);
        assert!("grpmc".parse::<Algorithm>().is_err());
        let t = small_target();
        let err = run_ais(&AisConfig::new(Algorithm::Pmc, 1, 1, 0, 1.0), &t, &RngStream::new(0, 0));
        assert!(err.is_err());
    }
}
