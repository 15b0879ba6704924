//! Incremental delta-sigma ADCs modeled as recurrent autoencoders.
//!
//! The modulator is a K-stage recurrent encoder emitting a one-bit stream;
//! the decimation filter is a cascade of accumulating cells. Both are
//! trained end to end under hardware constraints: quantized switched-
//! capacitor weights, saturation bounds, kT/C sampling noise and a total
//! capacitor budget.

pub mod autodiff;
pub mod baselines;
pub mod constraints;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod topology;

pub use error::{Error, Result};
