use serde::{Deserialize, Serialize};

use super::{GeometryError, Trajectory};

const TIMESTAMP_TOL: f64 = 1e-6;

/// Summary of a set of nonnegative errors: RMSE, max, mean and population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeStats {
    pub rmse: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl RpeStats {
    pub fn zero() -> Self {
        Self {
            rmse: 0.0,
            max: 0.0,
            mean: 0.0,
            std: 0.0,
        }
    }

    /// Returns `None` for an empty slice.
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let max = errors.iter().copied().fold(0.0, f64::max);
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        // rounding can push rmse a hair outside [mean, max]
        let rmse = mean_sq.sqrt().clamp(mean, max);
        Some(Self {
            rmse,
            max,
            mean,
            std: var.sqrt(),
        })
    }
}

fn check_pair(est: &Trajectory, reference: &Trajectory, delta: usize) -> Result<(), GeometryError> {
    if delta == 0 {
        return Err(GeometryError::Mismatch("delta must be positive".into()));
    }
    if est.len() != reference.len() {
        return Err(GeometryError::Mismatch(format!(
            "lengths {} and {}",
            est.len(),
            reference.len()
        )));
    }
    if est.len() <= delta {
        return Err(GeometryError::InsufficientLength {
            len: est.len(),
            delta,
        });
    }
    for (i, (a, b)) in est.timestamps().iter().zip(reference.timestamps()).enumerate() {
        if (a - b).abs() > TIMESTAMP_TOL {
            return Err(GeometryError::Mismatch(format!(
                "timestamp {a} vs {b} at index {i}"
            )));
        }
    }
    Ok(())
}

/// Per-index translational relative pose errors for a fixed step `delta`.
pub fn rpe_translation_errors(
    est: &Trajectory,
    reference: &Trajectory,
    delta: usize,
) -> Result<Vec<f64>, GeometryError> {
    check_pair(est, reference, delta)?;
    let e = est.poses();
    let r = reference.poses();
    Ok((0..e.len() - delta)
        .map(|i| {
            let rel_est = e[i].inverse().compose(&e[i + delta]);
            let rel_ref = r[i].inverse().compose(&r[i + delta]);
            rel_ref.inverse().compose(&rel_est).translation.norm()
        })
        .collect())
}

pub fn rpe_translation(
    est: &Trajectory,
    reference: &Trajectory,
    delta: usize,
) -> Result<RpeStats, GeometryError> {
    let errors = rpe_translation_errors(est, reference, delta)?;
    Ok(RpeStats::from_errors(&errors).expect("at least one error term"))
}

/// Rotational relative pose error (rotation angle of the error transform, radians).
pub fn rpe_rotation(
    est: &Trajectory,
    reference: &Trajectory,
    delta: usize,
) -> Result<RpeStats, GeometryError> {
    check_pair(est, reference, delta)?;
    let e = est.poses();
    let r = reference.poses();
    let errors: Vec<f64> = (0..e.len() - delta)
        .map(|i| {
            let rel_est = e[i].inverse().compose(&e[i + delta]);
            let rel_ref = r[i].inverse().compose(&r[i + delta]);
            let err = rel_ref.inverse().compose(&rel_est).rotation;
            ((err.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
        })
        .collect();
    Ok(RpeStats::from_errors(&errors).expect("at least one error term"))
}
