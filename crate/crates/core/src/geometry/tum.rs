//! Plain-text trajectory files: one pose per line,
//! `timestamp tx ty tz qx qy qz qw`, whitespace separated, `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use super::{AbsolutePose, Trajectory};

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(#[from] super::GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses trajectory text. Line numbers in errors are 1-based.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, TrajectoryFileError> {
    let mut timestamps = Vec::new();
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let values: Vec<f64> = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| TrajectoryFileError::Parse {
                    line: line_no,
                    message: format!("cannot parse number {tok:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 8 {
            return Err(TrajectoryFileError::Parse {
                line: line_no,
                message: format!("expected 8 values, found {}", values.len()),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(TrajectoryFileError::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        let q = Quaternion::new(values[7], values[4], values[5], values[6]);
        if q.norm() < 1e-12 {
            return Err(TrajectoryFileError::Parse {
                line: line_no,
                message: "zero quaternion".into(),
            });
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        timestamps.push(values[0]);
        poses.push(AbsolutePose {
            rotation,
            translation: Vector3::new(values[1], values[2], values[3]),
        });
    }
    Ok(Trajectory::new(timestamps, poses)?)
}

/// Renders a trajectory, preceded by `header` lines written as comments.
pub fn format_trajectory(traj: &Trajectory, header: &[&str]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for (t, p) in traj.timestamps().iter().zip(traj.poses()) {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rotation));
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            t, p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, TrajectoryFileError> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, header: &[&str]) -> Result<(), TrajectoryFileError> {
    std::fs::write(path, format_trajectory(traj, header))?;
    Ok(())
}
