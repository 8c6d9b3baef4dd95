//! Dense linear algebra, seeded random streams and the distribution samplers used
//! by targets and proposals.

mod linalg;
mod rng;
mod sampling;

pub use linalg::{cholesky, dot, log_sum_exp, squared_norm, CholeskyFactor, Matrix};
pub use rng::RngStream;
pub use sampling::{
    mvn_from_noise, mvn_log_density, sample_dirichlet, sample_inverse_wishart, sample_mvn,
};
