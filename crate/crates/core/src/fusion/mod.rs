//! Learned fusion of per-camera mixtures: a dropout MLP projects the
//! concatenated mixture parameters to a latent space, an LSTM carries state
//! across steps and a dense layer emits the fused relative pose.

mod net;
mod train;

pub use net::{fuse_forward, fusion_inputs, fusion_loss, FusionArch, FusionNet, ROTATION_WEIGHT};
pub use train::{predict_sequence, scenario_mixtures, train_fusion, FusionSeries, FusionTrainConfig};

use thiserror::Error;

use crate::mdn::MdnError;
use crate::neuralcore::NnError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mdn(#[from] MdnError),
}
