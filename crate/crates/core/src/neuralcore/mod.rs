//! Small reverse-mode autodiff engine with dense, recurrent and dropout layers,
//! Adam, plateau learning-rate scheduling and a binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod log;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::gradient_check;
pub use graph::{CustomOp, Gradients, Graph, NodeId};
pub use layers::{
    bilstm_window, bilstm_window_last, dense, lstm_cell, BoundDense, BoundLstm, Dense, Lstm,
    LstmState,
};
pub use log::{format_training_log, EpochRecord};
pub use optim::{AdamConfig, ParamStore, PlateauScheduler};

use thiserror::Error;

/// Dense row-major matrix; rows index batch entries.
pub type Tensor = ndarray::Array2<f64>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("gradient check failed: {0}")]
    CheckFailed(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
