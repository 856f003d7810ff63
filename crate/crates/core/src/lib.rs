//! Quantum-tunnelling (QT) neural networks.
//!
//! The QT activation replaces ReLU with the transmission probability of a
//! rectangular potential barrier. This crate provides:
//!
//! - [`qt`]: transmission coefficient, its derivative, energy maps, and the
//!   bound-state spectrum of the matching square well
//! - [`nn`]: matrices, seeded random streams, dense layers, losses, SGD and a
//!   gradient checker
//! - [`bnn`]: mean-field Gaussian Bayesian dense network trained by
//!   Bayes-by-backprop, with Monte-Carlo averaged prediction
//! - [`rnn`]: Elman recurrent classifier trained by backpropagation through time
//! - [`data`]: CIFAR binary I/O, the synthetic vehicle images, the military
//!   lexicon and phrase corpus
//! - [`checkpoint`]: the shared binary checkpoint format

pub mod bnn;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod qt;
pub mod rnn;

pub use error::{Error, Result};
pub use nn::{Activation, Matrix, SeedStream};
pub use qt::{Barrier, EnergyMap, EnergyMapKind};
