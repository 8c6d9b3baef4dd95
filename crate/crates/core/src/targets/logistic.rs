use super::TargetDensity;
use crate::numkit::{dot, squared_norm, Matrix, RngStream};
use crate::{Error, Result};

/// `log(1 + eᵗ)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log p(y | z, x) = y·t − softplus(t)` with `t = zᵀx`.
pub fn log_likelihood_point(z: &[f64], y: u8, x: &[f64]) -> f64 {
    let t = dot(z, x);
    f64::from(y) * t - softplus(t)
}

/// Predictors (one row per observation) with binary labels.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub design: Matrix,
    pub labels: Vec<u8>,
}

impl LabeledData {
    pub fn new(design: Matrix, labels: Vec<u8>) -> Result<Self> {
        Error::check_dim(design.rows(), labels.len())?;
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(LabeledData { design, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }
}

/// Posterior of Bayesian logistic regression with prior `N(0, ζ²I)`, unnormalized.
#[derive(Debug, Clone)]
pub struct LogisticRegressionTarget {
    dim: usize,
    data: LabeledData,
    prior_scale: f64,
}

impl LogisticRegressionTarget {
    pub fn new(dim: usize, data: LabeledData, prior_scale: f64) -> Result<Self> {
        if !data.is_empty() {
            Error::check_dim(dim, data.dim())?;
        }
        if !(prior_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior scale must be positive, got {prior_scale}"
            )));
        }
        Ok(LogisticRegressionTarget {
            dim,
            data,
            prior_scale,
        })
    }

    pub fn data(&self) -> &LabeledData {
        &self.data
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }
}

impl TargetDensity for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        let prior = -squared_norm(x) / (2.0 * self.prior_scale * self.prior_scale);
        let lik: f64 = (0..self.data.len())
            .map(|i| log_likelihood_point(self.data.design.row(i), self.data.labels[i], x))
            .sum();
        Ok(prior + lik)
    }

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_density_and_grad(x)?.1)
    }

    fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Error::check_dim(self.dim, x.len())?;
        let inv_var = 1.0 / (self.prior_scale * self.prior_scale);
        let mut value = -0.5 * squared_norm(x) * inv_var;
        let mut grad: Vec<f64> = x.iter().map(|v| -v * inv_var).collect();
        for i in 0..self.data.len() {
            let z = self.data.design.row(i);
            let y = f64::from(self.data.labels[i]);
            let t = dot(z, x);
            value += y * t - softplus(t);
            let r = y - sigmoid(t);
            for (g, zj) in grad.iter_mut().zip(z) {
                *g += r * zj;
            }
        }
        Ok((value, grad))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub train: LabeledData,
    pub test: LabeledData,
    pub true_weights: Vec<f64>,
}

fn simulate_rows(rng: &mut RngStream, x: &[f64], rows: usize, delta: f64) -> Result<LabeledData> {
    let d = x.len();
    let mut design = Matrix::zeros(rows, d);
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        design[(i, 0)] = 1.0;
        for j in 1..d {
            design[(i, j)] = delta * rng.standard_normal();
        }
        let q = sigmoid(dot(design.row(i), x));
        labels.push(u8::from(rng.uniform(0.0, 1.0) < q));
    }
    LabeledData::new(design, labels)
}

/// Draws true weights from the prior, then intercept-plus-Gaussian predictors and
/// Bernoulli labels for both splits.
pub fn make_logistic_dataset(
    rng: &mut RngStream,
    dim: usize,
    n_train: usize,
    n_test: usize,
    zeta: f64,
    delta: f64,
) -> Result<SyntheticDataset> {
    if dim == 0 || n_train == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(
            "logistic dataset needs positive dimension and sizes".into(),
        ));
    }
    if !(zeta > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument(
            "logistic dataset needs positive zeta and delta".into(),
        ));
    }
    let true_weights: Vec<f64> = (0..dim).map(|_| zeta * rng.standard_normal()).collect();
    let train = simulate_rows(rng, &true_weights, n_train, delta)?;
    let test = simulate_rows(rng, &true_weights, n_test, delta)?;
    Ok(SyntheticDataset {
        train,
        test,
        true_weights,
    })
}

impl SyntheticDataset {
    pub fn posterior(&self, zeta: f64) -> Result<LogisticRegressionTarget> {
        LogisticRegressionTarget::new(self.true_weights.len(), self.train.clone(), zeta)
    }
}
