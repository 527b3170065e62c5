//! Energy-aware precoding for massive-MIMO transmitters.
//!
//! Covers the transmitter power model, synthetic channels, link metrics,
//! classical baselines and the unsupervised learners that select antennas
//! or RF-chain connections together with the precoder.

pub mod baselines;
pub mod channel;
pub mod energy;
pub mod evaluate;
mod error;
pub mod hardware;
pub mod learner;
pub mod metrics;

pub use error::{CoreError, Result};
