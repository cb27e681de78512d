//! Calibration of Monte Carlo dropout uncertainty.
//!
//! Model uncertainty read off averaged softmax outputs tends to understate
//! the actual error rate. This crate measures that miscalibration and
//! repairs it with a single fitted temperature scalar:
//!
//! - [`prob`]: stable softmax, MC integration, normalized entropy, NLL;
//! - [`binning`]: equal-width binning, ECE/UCE, reliability tables;
//! - [`tempfit`]: temperature fitting by validation-NLL minimization;
//! - [`toynet`]: a small MLP with pre-output dropout so the whole
//!   pipeline runs end-to-end on synthetic data;
//! - [`rejection`]: error of the retained set under an uncertainty
//!   threshold sweep;
//! - [`io`]: line-delimited logit dumps, report JSON, and CSV tables.

pub mod binning;
pub mod error;
pub mod io;
pub mod prob;
pub mod rejection;
pub mod tempfit;
pub mod toynet;

pub use error::{Error, Result};
pub use prob::{LogitSampleSet, LogitVector, ProbVector, TemperatureParam};
