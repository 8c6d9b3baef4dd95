//! Reverse-mode gradient of the Monte Carlo KL loss and the RMSprop optimizer.

mod loss;
mod rmsprop;

pub use loss::{kl_loss, loss_and_gradient, BaseNoise, LossGradient, SampleBatch};
pub use rmsprop::{lr_schedule, rmsprop_step, RmsPropState, DEFAULT_DECAY, DEFAULT_STABILIZER};
