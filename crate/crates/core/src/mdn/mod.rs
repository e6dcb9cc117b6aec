//! Mixture density heads: isotropic Gaussian mixtures over 6-DoF relative
//! pose, their densities and moments, the NLL training objective and the
//! per-camera windowed recurrent network that produces them.

mod io;
mod mixture;
mod model;
mod nll;

pub use io::{format_mixture_csv, parse_mixture_csv};
pub use mixture::{
    activate_head, component_logdensity, component_logdensity_with, mixture_covariance, mixture_logdensity,
    mixture_logdensity_with, mixture_mean, mixture_mean_array, sample, sample_with, MixtureParams, Normalizer,
    SIGMA_LOG_CLAMP,
};
pub use model::{train_mdn, window_batch, CameraMdn, MdnArch, MdnTrainConfig, SeriesRef};
pub use nll::nll_loss;

use thiserror::Error;

use crate::neuralcore::NnError;

#[derive(Debug, Error)]
pub enum MdnError {
    #[error("invalid mixture: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[cfg(test)]
pub(crate) use mixture::tests as mixture_tests;
