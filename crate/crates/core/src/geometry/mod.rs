//! SE(3) pose algebra, trajectories, similarity alignment and relative pose error.
//!
//! Rotations use the intrinsic Z-Y-X (yaw-pitch-roll) Euler convention everywhere.
//! Euler triples are stored as `(roll, pitch, yaw)`, so `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
//! Relative poses are expressed in the frame of the earlier pose.

mod align;
mod pose;
mod rpe;
pub mod tum;

pub use align::{umeyama_align, Similarity};
pub use pose::{
    accumulate, euler_to_matrix, matrix_to_euler, relative, wrap_angle, AbsolutePose,
    RelativePose6, Trajectory,
};
pub use rpe::{rpe_rotation, rpe_translation, rpe_translation_errors, RpeStats};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rotation matrix is not orthonormal with determinant +1 (deviation {0:e})")]
    NotRotation(f64),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("alignment degenerate: {0}")]
    AlignmentDegenerate(String),
    #[error("trajectory of length {len} is too short for delta {delta}")]
    InsufficientLength { len: usize, delta: usize },
    #[error("trajectories differ: {0}")]
    Mismatch(String),
}
