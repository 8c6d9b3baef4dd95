use super::TargetDensity;
use crate::numkit::{
    cholesky, log_sum_exp, mvn_log_density, sample_dirichlet, sample_inverse_wishart,
    CholeskyFactor, Matrix, RngStream,
};
use crate::{Error, Result};

/// `π(x) = Σₚ αₚ N(x; mₚ, Qₚ)`, kept fully normalized.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    dim: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Matrix>,
    chols: Vec<CholeskyFactor>,
}

impl GaussianMixtureTarget {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture needs at least one component"));
        }
        Error::check_dim(weights.len(), means.len())?;
        Error::check_dim(weights.len(), covariances.len())?;
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = means[0].len();
        let mut chols = Vec::with_capacity(covariances.len());
        for (m, q) in means.iter().zip(&covariances) {
            Error::check_dim(dim, m.len())?;
            Error::check_dim(dim, q.rows())?;
            chols.push(cholesky(q)?);
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GaussianMixtureTarget {
            dim,
            weights,
            log_weights,
            means,
            covariances,
            chols,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Matrix] {
        &self.covariances
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// `Σₚ αₚ mₚ`
    pub fn true_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (acc, v) in mean.iter_mut().zip(m) {
                *acc += w * v;
            }
        }
        mean
    }

    fn component_terms(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim, x.len())?;
        self.log_weights
            .iter()
            .zip(self.means.iter().zip(&self.chols))
            .map(|(lw, (m, c))| Ok(lw + mvn_log_density(x, m, c)?))
            .collect()
    }
}

impl TargetDensity for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        log_sum_exp(&self.component_terms(x)?)
    }

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_density_and_grad(x)?.1)
    }

    fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let terms = self.component_terms(x)?;
        let total = log_sum_exp(&terms)?;
        let mut grad = vec![0.0; self.dim];
        for (t, (m, c)) in terms.iter().zip(self.means.iter().zip(&self.chols)) {
            let r = (t - total).exp();
            if r == 0.0 {
                continue;
            }
            let diff: Vec<f64> = m.iter().zip(x).map(|(a, b)| a - b).collect();
            let score = c.solve(&diff)?;
            for (g, s) in grad.iter_mut().zip(&score) {
                *g += r * s;
            }
        }
        Ok((total, grad))
    }
}

/// Random mixture target: `α ~ Dir(10·1)`, `mₚ ~ U([-10,10]^d)`,
/// `Qₚ = Q̃ₚ + 2I` with `Q̃ₚ ~ IW(I, d)`.
pub fn make_gmm_target(rng: &mut RngStream, dim: usize, components: usize) -> Result<GaussianMixtureTarget> {
    if dim == 0 || components == 0 {
        return Err(Error::InvalidArgument(
            "mixture target needs d >= 1 and P >= 1".into(),
        ));
    }
    let weights = sample_dirichlet(rng, &vec![10.0; components])?;
    let means = (0..components)
        .map(|_| (0..dim).map(|_| rng.uniform(-10.0, 10.0)).collect())
        .collect();
    let shift = Matrix::scaled_identity(dim, 2.0);
    let covariances = (0..components)
        .map(|_| sample_inverse_wishart(rng, &Matrix::identity(dim), dim)?.add(&shift))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixtureTarget::new(weights, means, covariances)
}
