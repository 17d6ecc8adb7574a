//! Out-of-sample risk estimation and penalty tuning for ridge regression under
//! right-rotationally invariant designs.
//!
//! The design is decomposed once as `X = Q^T D O`; every estimator below is then a
//! cheap function of the singular values and the rotated response `Q y`.

pub mod aligned;
pub mod baselines;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod ridge;
pub mod rng;
pub mod roti_gcv;
pub mod spectra;

pub use error::{Error, Result};
pub use ridge::{ridge_fit, RidgeFit, RidgePath};
pub use roti_gcv::{estimate_snr, risk_functional, roti_gcv_metric, tune_lambda, RotiGcv, SnrEstimate};
pub use spectra::{svd_decompose, SpectralDecomposition};
