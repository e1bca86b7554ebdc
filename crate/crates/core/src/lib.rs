//! Exposure-length change detection for free-span submarine cables from
//! distributed fiber-optic vibration measurements.
//!
//! The pipeline has two learned stages. A single-response PLS regression,
//! trained against known exposure lengths, projects frequency-by-distance
//! spectra onto a handful of latent components. A one-class SVM per cable
//! section then encloses the latent baseline, and its signed decision value
//! is the anomaly score.
//!
//! Modules:
//! - [`dasio`]: `.das` binary trial files, JSON sidecars, anomaly reports
//! - [`preprocess`]: segment selection, STFT, band limiting, feature matrices
//! - [`pls`]: PLS1 regression and cross-validated component selection
//! - [`ocsvm`]: RBF one-class SVM with an SMO dual solver
//! - [`pipeline`]: holdout split, training, scoring, exposure-length change
//! - [`stats`]: Mann-Whitney U, Holm, Cliff's delta, correlation, metrics
//! - [`simulator`]: synthetic free-span vibration trials

pub mod dasio;
pub mod error;
pub mod linalg;
pub mod ocsvm;
pub mod par;
pub mod pipeline;
pub mod pls;
pub mod preprocess;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use par::Exec;
