//! Synthetic multi-camera odometry: smooth ground-truth drives, per-camera
//! noisy relative poses with condition-dependent noise and outliers, and
//! feature vectors that encode those poses through a fixed random map.

mod io;
mod observe;
mod rig;
mod trajectory;

pub use io::{read_scenario, write_scenario, ScenarioMeta};
pub use observe::{observe, observe_with_maps, FeatureMap, FeatureSequence, SimScenario};
pub use rig::{default_conditions, CameraRig, CameraSpec, Condition, ConditionProfile, DEFAULT_CAMERAS};
pub use trajectory::{generate_trajectory, generate_trajectory_with, TrajectoryConfig, MAX_SPEED};

use thiserror::Error;

use crate::geometry::{tum::TrajectoryFileError, GeometryError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{file}: {source}")]
    Trajectory {
        file: String,
        source: TrajectoryFileError,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {source}")]
    Json {
        file: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
