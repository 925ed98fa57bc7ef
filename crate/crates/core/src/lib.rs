//! Online spike-time gradient descent for feedforward spiking networks.
//!
//! Neurons follow a spike response model: the membrane potential is a sum
//! of weighted postsynaptic potentials over recent afferent spikes plus an
//! after-hyperpolarization for every recent efferent spike. A closed-form
//! disparity between the output spike train and a desired train is
//! differentiated with respect to output spike times, and perturbation
//! tapes recorded at every emission carry that gradient back to the
//! weights of every layer.
//!
//! - [`kernels`]: PSP, AHP and impact kernels.
//! - [`network`]: topology, per-spike weight ledgers, fixed-step simulation.
//! - [`disparity`]: the error functional and its age gradient.
//! - [`gradients`]: spike tapes, chain-rule assembly, capped updates.
//! - [`experiments`]: Poisson drives, witness/learner pairs, suites.
//! - [`config`], [`commands`]: declarative run configuration and the
//!   entry points behind the `spikegrad` binary.

pub mod commands;
pub mod config;
pub mod disparity;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod gradients;
pub mod kernels;
pub mod network;

pub use error::{Error, Result};
