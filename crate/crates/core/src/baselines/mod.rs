//! Classical fusion baselines over per-camera mixture moments: a random-walk
//! Kalman filter on relative pose and a static inverse-variance average.

mod kalman;

pub use kalman::{
    inverse_variance_average, kf_fuse_sequence, kf_predict, kf_update, tune_process_noise, KfState,
    Measurement, ProcessModel, MEASUREMENT_JITTER,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
