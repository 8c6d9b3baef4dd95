//! Unnormalized target log-densities with analytic gradients, and the synthetic
//! experiment generators.

mod gmm;
mod logistic;

pub use gmm::{make_gmm_target, GaussianMixtureTarget};
pub use logistic::{
    log_likelihood_point, make_logistic_dataset, softplus, LabeledData, LogisticRegressionTarget,
    SyntheticDataset,
};

use crate::Result;

/// An unnormalized log-density `log π(x)` with its score `∇ log π(x)`.
pub trait TargetDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> Result<f64>;

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Both at once; override when they share work.
    fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.log_density(x)?, self.grad_log_density(x)?))
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        (**self).log_density(x)
    }

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).grad_log_density(x)
    }

    fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).log_density_and_grad(x)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::TargetDensity;
    use crate::numkit::RngStream;

    /// Worst relative error between the analytic gradient and central differences
    /// with step `1e-5·(1+‖x‖∞)`.
    pub fn fd_gradient_error<T: TargetDensity>(target: &T, x: &[f64]) -> f64 {
        let h = 1e-5 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let g = target.grad_log_density(x).unwrap();
        let mut worst: f64 = 0.0;
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = target.log_density(&xp).unwrap();
            xp[i] = x[i] - h;
            let fm = target.log_density(&xp).unwrap();
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max((fd - g[i]).abs() / scale);
        }
        worst
    }

    pub fn random_points(rng: &mut RngStream, d: usize, count: usize, spread: f64) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..d).map(|_| rng.uniform(-spread, spread)).collect())
            .collect()
    }

    /// Wraps a target and adds a constant to its log-density.
    pub struct Shifted<T>(pub T, pub f64);

    impl<T: TargetDensity> TargetDensity for Shifted<T> {
        fn dim(&self) -> usize {
            self.0.dim()
        }

        fn log_density(&self, x: &[f64]) -> crate::Result<f64> {
            Ok(self.0.log_density(x)? + self.1)
        }

        fn grad_log_density(&self, x: &[f64]) -> crate::Result<Vec<f64>> {
            self.0.grad_log_density(x)
        }

        fn log_density_and_grad(&self, x: &[f64]) -> crate::Result<(f64, Vec<f64>)> {
            let (v, g) = self.0.log_density_and_grad(x)?;
            Ok((v + self.1, g))
        }
    }
}
