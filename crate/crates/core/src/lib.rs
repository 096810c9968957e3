//! Human-and-machine co-learning for noisy EEG labels.
//!
//! The crate covers the whole numeric side of the system:
//!
//! * [`signal`]: low-pass filtering, bipolar montages, windowing and mirror augmentation;
//! * [`cohort`]: a synthetic multi-patient cohort with label noise and a simulated reviewer;
//! * [`nn`]: a small layer engine with exact gradients (CNN, convolutional auto-encoder, dense head, Adam);
//! * [`memory`]: the reference-embedding memory, cosine scores, explanations and interpretability;
//! * [`colearn`]: the iterative train / select / suggest / relabel loop and its reports.

pub mod cohort;
pub mod colearn;
pub mod error;
pub mod labels;
pub mod memory;
pub mod nn;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use labels::{ClassLabel, NUM_CLASSES};
