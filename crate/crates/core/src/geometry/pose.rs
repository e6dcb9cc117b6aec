use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::GeometryError;

const ORTHONORMAL_TOL: f64 = 1e-9;
const GIMBAL_TOL: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid can return exactly 2pi for tiny negative inputs
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Rotation matrix for Euler angles `(roll, pitch, yaw)`, `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_to_matrix(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = phi.x.sin_cos();
    let (sp, cp) = phi.y.sin_cos();
    let (sy, cy) = phi.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Inverse of [`euler_to_matrix`]. Pitch lies in `[-pi/2, pi/2]`.
///
/// At gimbal lock (pitch within 1e-9 of +-pi/2) roll is fixed to 0 and the
/// remaining rotation about the vertical axis is reported as yaw.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let cp = (r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)]).sqrt();
    let pitch = (-r[(2, 0)]).atan2(cp);
    if FRAC_PI_2 - pitch.abs() < GIMBAL_TOL {
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        let pitch = FRAC_PI_2.copysign(pitch);
        return Vector3::new(0.0, pitch, wrap_angle(yaw));
    }
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Vector3::new(wrap_angle(roll), pitch, wrap_angle(yaw))
}

/// 6-DoF relative motion: translation `rho` (m) and Euler rotation `phi` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose6 {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl RelativePose6 {
    /// Builds a relative pose, wrapping each angle into `(-pi, pi]`.
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rho.iter().chain(phi.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("relative pose"));
        }
        Ok(Self {
            rho,
            phi: phi.map(wrap_angle),
        })
    }

    pub fn zero() -> Self {
        Self {
            rho: Vector3::zeros(),
            phi: Vector3::zeros(),
        }
    }

    /// From `[tx, ty, tz, roll, pitch, yaw]`.
    pub fn from_array(v: [f64; 6]) -> Result<Self, GeometryError> {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, GeometryError> {
        let arr: [f64; 6] = v
            .try_into()
            .map_err(|_| GeometryError::InvalidTrajectory(format!("expected 6 values, got {}", v.len())))?;
        Self::from_array(arr)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        ]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.to_array())
    }

    /// The rigid transform this relative motion represents.
    pub fn to_pose(&self) -> AbsolutePose {
        AbsolutePose {
            rotation: euler_to_matrix(&self.phi),
            translation: self.rho,
        }
    }
}

/// Rigid transform with an orthonormal rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsolutePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for AbsolutePose {
    fn default() -> Self {
        Self::identity()
    }
}

impl AbsolutePose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validating constructor: `rotation` must be orthonormal with det +1 within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        let dev = rotation_deviation(&rotation);
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotRotation(dev));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_euler(phi: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: euler_to_matrix(&phi),
            translation,
        }
    }

    /// `self * other`.
    pub fn compose(&self, other: &AbsolutePose) -> AbsolutePose {
        AbsolutePose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> AbsolutePose {
        let rt = self.rotation.transpose();
        AbsolutePose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Projects the rotation back onto SO(3) to remove accumulated drift.
    pub fn renormalized(&self) -> AbsolutePose {
        let rot = Rotation3::from_matrix(&self.rotation);
        AbsolutePose {
            rotation: rot.into_inner(),
            translation: self.translation,
        }
    }
}

impl Mul for AbsolutePose {
    type Output = AbsolutePose;
    fn mul(self, rhs: AbsolutePose) -> AbsolutePose {
        self.compose(&rhs)
    }
}

fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho.max((r.determinant() - 1.0).abs())
}

/// Motion from `prev` to `curr`, expressed in the `prev` frame.
pub fn relative(prev: &AbsolutePose, curr: &AbsolutePose) -> RelativePose6 {
    let delta = prev.inverse().compose(curr);
    RelativePose6 {
        rho: delta.translation,
        phi: matrix_to_euler(&delta.rotation),
    }
}

/// Folds relative motions onto `start`; timestamps are the step indices.
pub fn accumulate(start: &AbsolutePose, rels: &[RelativePose6]) -> Trajectory {
    let mut poses = Vec::with_capacity(rels.len() + 1);
    poses.push(*start);
    let mut current = *start;
    for rel in rels {
        current = current.compose(&rel.to_pose());
        poses.push(current);
    }
    let timestamps = (0..poses.len()).map(|i| i as f64).collect();
    Trajectory { timestamps, poses }
}

/// Timestamped sequence of absolute poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    poses: Vec<AbsolutePose>,
}

impl Trajectory {
    pub fn new(timestamps: Vec<f64>, poses: Vec<AbsolutePose>) -> Result<Self, GeometryError> {
        if poses.is_empty() {
            return Err(GeometryError::InvalidTrajectory("empty trajectory".into()));
        }
        if timestamps.len() != poses.len() {
            return Err(GeometryError::InvalidTrajectory(format!(
                "{} timestamps for {} poses",
                timestamps.len(),
                poses.len()
            )));
        }
        if !timestamps.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::NonFinite("timestamps"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GeometryError::InvalidTrajectory(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { timestamps, poses })
    }

    /// Replaces the timestamps, keeping the poses.
    pub fn with_timestamps(self, timestamps: Vec<f64>) -> Result<Self, GeometryError> {
        Self::new(timestamps, self.poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn poses(&self) -> &[AbsolutePose] {
        &self.poses
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Consecutive relative motions; `len() - 1` entries.
    pub fn relative_poses(&self) -> Vec<RelativePose6> {
        self.poses
            .windows(2)
            .map(|w| relative(&w[0], &w[1]))
            .collect()
    }
}
