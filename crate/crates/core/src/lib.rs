//! Population Monte Carlo with normalizing-flow proposals.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense linear algebra, seeded random streams and distribution samplers.
//! - [`targets`]: unnormalized target log-densities with analytic scores, and the
//!   synthetic experiment generators (Gaussian mixture, Bayesian logistic regression).
//! - [`flow`]: a two-layer real-NVP flow with exact inverse and log-determinant.
//! - [`gradkit`]: reverse-mode gradient of the Monte Carlo KL loss and RMSprop.
//! - [`samplers`]: the generic adaptive importance sampling loop and its
//!   PMC / GR-PMC / LR-PMC / SL-PMC / NF-PMC strategies.
//! - [`estimators`]: self-normalized estimators, benchmark metrics and the Wilcoxon test.
//! - [`bench`]: experiment configuration, trial orchestration and CSV output.

pub mod bench;
pub mod error;
pub mod estimators;
pub mod flow;
pub mod gradkit;
pub mod numkit;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
