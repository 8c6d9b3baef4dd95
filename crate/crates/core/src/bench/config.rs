use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gradkit::{DEFAULT_DECAY, DEFAULT_STABILIZER};
use crate::samplers::{AisConfig, Algorithm, FlowInit};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gmm,
    Logistic,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Experiment::Gmm => "gmm",
            Experiment::Logistic => "logistic",
        }
    }

    /// Base learning rate for nf-pmc when the config leaves it unset.
    pub fn default_base_lr(self) -> f64 {
        match self {
            Experiment::Gmm => 0.005,
            Experiment::Logistic => 0.05,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(Experiment::Gmm),
            "logistic" => Ok(Experiment::Logistic),
            _ => Err(Error::InvalidArgument(format!("unknown experiment '{s}'"))),
        }
    }
}

/// A benchmark configuration. Missing keys take the full-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dimension: usize,
    /// Mixture components (gmm).
    pub components: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Prior scale (logistic).
    pub zeta: f64,
    /// Predictor scale (logistic).
    pub delta: f64,
    pub algorithms: Vec<Algorithm>,
    pub sigmas: Vec<f64>,
    pub n_proposals: usize,
    pub samples_per_proposal: usize,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub hidden: Vec<usize>,
    pub init_low: f64,
    pub init_high: f64,
    /// nf-pmc base learning rate; defaults per experiment.
    pub nf_base_lr: Option<f64>,
    pub rms_decay: f64,
    pub rms_stabilizer: f64,
    pub langevin_step: f64,
    pub langevin_noise: bool,
    pub burn_in_iterations: usize,
    /// Off makes every output byte reproducible (runtime columns stay empty).
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Gmm,
            dimension: 200,
            components: 5,
            n_train: 500,
            n_test: 500,
            zeta: 10.0,
            delta: 0.1,
            algorithms: Algorithm::ALL.to_vec(),
            sigmas: vec![1.0, 2.0, 3.0],
            n_proposals: 100,
            samples_per_proposal: 10,
            iterations: 50,
            trials: 100,
            seed: 0,
            output_dir: PathBuf::from("results"),
            hidden: crate::flow::DEFAULT_HIDDEN.to_vec(),
            init_low: -10.0,
            init_high: 10.0,
            nf_base_lr: None,
            rms_decay: DEFAULT_DECAY,
            rms_stabilizer: DEFAULT_STABILIZER,
            langevin_step: 1.0,
            langevin_noise: true,
            burn_in_iterations: 0,
            record_runtime: true,
        }
    }
}

fn invalid(key: &str, message: impl fmt::Display) -> Error {
    Error::InvalidArgument(format!("{key}: {message}"))
}

impl ExperimentConfig {
    pub fn base_lr(&self) -> f64 {
        self.nf_base_lr.unwrap_or_else(|| self.experiment.default_base_lr())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dimension", self.dimension),
            ("n_proposals", self.n_proposals),
            ("samples_per_proposal", self.samples_per_proposal),
            ("iterations", self.iterations),
            ("trials", self.trials),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        match self.experiment {
            Experiment::Gmm if self.components == 0 => return Err(invalid("components", "must be positive")),
            Experiment::Logistic => {
                if self.n_train == 0 {
                    return Err(invalid("n_train", "must be positive"));
                }
                if self.n_test == 0 {
                    return Err(invalid("n_test", "must be positive"));
                }
                if !(self.zeta > 0.0 && self.zeta.is_finite()) {
                    return Err(invalid("zeta", "must be positive"));
                }
                if !(self.delta > 0.0 && self.delta.is_finite()) {
                    return Err(invalid("delta", "must be positive"));
                }
            }
            _ => {}
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "must list at least one algorithm"));
        }
        if self.sigmas.is_empty() {
            return Err(invalid("sigmas", "must list at least one value"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(invalid("sigmas", format!("{s} is not positive")));
        }
        if !(self.init_low < self.init_high) {
            return Err(invalid("init_low", "must be below init_high"));
        }
        if !(self.base_lr() > 0.0) {
            return Err(invalid("nf_base_lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return Err(invalid("rms_decay", "must lie in [0, 1)"));
        }
        if !(self.rms_stabilizer > 0.0) {
            return Err(invalid("rms_stabilizer", "must be positive"));
        }
        if !(self.langevin_step > 0.0) {
            return Err(invalid("langevin_step", "must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be positive"));
        }
        if self.burn_in_iterations >= self.iterations {
            return Err(invalid("burn_in_iterations", "must be below iterations"));
        }
        Ok(())
    }

    /// Sampler settings for one (algorithm, σ) run.
    pub fn ais_config(&self, algorithm: Algorithm, sigma: f64) -> AisConfig {
        AisConfig {
            algorithm,
            proposals: self.n_proposals,
            samples_per_proposal: self.samples_per_proposal,
            iterations: self.iterations,
            sigma,
            init_box: (self.init_low, self.init_high),
            base_lr: self.base_lr(),
            rms_decay: self.rms_decay,
            rms_stabilizer: self.rms_stabilizer,
            hidden: self.hidden.clone(),
            flow_init: FlowInit::Xavier,
            langevin_step: self.langevin_step,
            langevin_noise: self.langevin_noise,
            adapt: true,
        }
    }

    /// Burn-in in the sampler's own iteration count (PMC runs `K` times as many).
    pub fn burn_in_for(&self, algorithm: Algorithm) -> usize {
        if algorithm == Algorithm::Pmc {
            self.burn_in_iterations * self.samples_per_proposal
        } else {
            self.burn_in_iterations
        }
    }
}

pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.message().to_string())?;
    cfg.validate().map_err(|e| match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    })?;
    Ok(cfg)
}

/// Reads and validates a TOML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: format!("cannot read file: {e}"),
    })?;
    parse_config(&text).map_err(|message| Error::Config {
        path: path.to_path_buf(),
        message,
    })
}
