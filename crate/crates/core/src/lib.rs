//! Two-layer ReLU networks trained by online SGD on the zero-margin Gaussian XOR
//! problem, with the bookkeeping needed to follow their neuron-block dynamics
//! and numerical checks of the Gaussian and population-gradient identities
//! that drive them.

pub mod blockstats;
pub mod distributions;
pub mod error;
pub mod gauss;
pub mod harness;
pub mod lemma_lab;
pub mod network;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
