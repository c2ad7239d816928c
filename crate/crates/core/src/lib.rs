//! Modulation recognition from I/Q sample sequences.
//!
//! The pipeline: simulate (or ingest) fixed-length complex baseband
//! instances, transform them to amplitude/phase series, extract global
//! (high-order cumulant, order statistic) and local (shingle Fisher
//! Vector) features, and classify with a linear one-vs-rest SVM. The
//! `harness` module orchestrates the accuracy studies end to end from
//! declarative configs.

pub mod dataset;
pub mod error;
pub mod features;
pub mod harness;
pub mod iq;
pub mod sim;
pub mod svm;

pub use error::{Error, Result};
