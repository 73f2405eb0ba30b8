//! Classifiers for windowed EEG: an LSTM, a temporal CNN and a random
//! forest, fused by a logistic-regression meta-classifier.
//!
//! [`train::train_ensemble`] fits the whole chain from a labeled
//! recording; [`ensemble::Ensemble::predict`] runs it on one window;
//! [`bundle`] persists it.

pub mod bundle;
pub mod cnn;
pub mod dataset;
pub mod ensemble;
mod error;
pub mod features;
pub mod forest;
pub mod lstm;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod sweep;
pub mod train;

pub use ensemble::{Ensemble, EnsemblePrediction, StageTimings};
pub use error::ModelError;
