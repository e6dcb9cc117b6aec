use nalgebra::{Matrix6, Vector6};

use super::BaselineError;
use crate::geometry::{wrap_angle, RelativePose6};
use crate::mdn::{mixture_covariance, mixture_mean_array, MixtureParams};

/// Added to a measurement covariance that fails a Cholesky factorization.
pub const MEASUREMENT_JITTER: f64 = 1e-9;

/// One camera's reading for one step: mean and covariance of its mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub z: Vector6<f64>,
    pub r: Matrix6<f64>,
}

impl Measurement {
    pub fn new(z: Vector6<f64>, r: Matrix6<f64>) -> Self {
        Self { z, r }
    }

    pub fn from_mixture(p: &MixtureParams) -> Self {
        Self {
            z: Vector6::from(mixture_mean_array(p)),
            r: mixture_covariance(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
}

fn check_covariance(m: &Matrix6<f64>, what: &str) -> Result<(), BaselineError> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(BaselineError::Invalid(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * m.abs().max().max(1.0) {
        return Err(BaselineError::Invalid(format!("{what} is not symmetric ({asym:e})")));
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if min_eig < -1e-10 * m.abs().max().max(1.0) {
        return Err(BaselineError::Invalid(format!("{what} has eigenvalue {min_eig:e}")));
    }
    Ok(())
}

fn symmetrize(m: Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

impl KfState {
    pub fn new(x: Vector6<f64>, p: Matrix6<f64>) -> Result<Self, BaselineError> {
        check_covariance(&p, "state covariance")?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(BaselineError::Invalid("state mean has non-finite entries".into()));
        }
        Ok(Self { x, p })
    }

    /// Zero mean with covariance `scale · I`.
    pub fn diffuse(scale: f64) -> Self {
        Self {
            x: Vector6::zeros(),
            p: Matrix6::identity() * scale,
        }
    }

    pub fn pose(&self) -> RelativePose6 {
        RelativePose6::from_array(std::array::from_fn(|k| self.x[k])).expect("finite state")
    }
}

/// Random walk on the relative pose: `x ← x`, `P ← P + Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel {
    pub q: Matrix6<f64>,
}

impl ProcessModel {
    pub fn new(q: Matrix6<f64>) -> Result<Self, BaselineError> {
        check_covariance(&q, "process noise")?;
        Ok(Self { q })
    }

    /// Diagonal noise with one variance for translation and one for rotation.
    pub fn diagonal(translation_var: f64, rotation_var: f64) -> Result<Self, BaselineError> {
        let d = Vector6::new(
            translation_var,
            translation_var,
            translation_var,
            rotation_var,
            rotation_var,
            rotation_var,
        );
        Self::new(Matrix6::from_diagonal(&d))
    }
}

pub fn kf_predict(state: &KfState, model: &ProcessModel) -> KfState {
    KfState {
        x: state.x,
        p: state.p + model.q,
    }
}

/// Identity-measurement Kalman update with rotation residuals wrapped to (−π, π].
pub fn kf_update(state: &KfState, m: &Measurement) -> Result<KfState, BaselineError> {
    if !m.z.iter().all(|v| v.is_finite()) {
        return Err(BaselineError::Invalid("measurement has non-finite entries".into()));
    }
    let mut r = symmetrize(m.r);
    if r.cholesky().is_none() {
        r += Matrix6::identity() * MEASUREMENT_JITTER;
    }
    let s = symmetrize(state.p + r);
    let chol = s
        .cholesky()
        .ok_or_else(|| BaselineError::Numerical("innovation covariance is not positive definite".into()))?;
    let mut resid = m.z - state.x;
    for k in 3..6 {
        resid[k] = wrap_angle(resid[k]);
    }
    // K = P S⁻¹, computed as (S⁻¹ P)ᵀ since both are symmetric.
    let gain = chol.solve(&state.p).transpose();
    let mut x = state.x + gain * resid;
    for k in 3..6 {
        x[k] = wrap_angle(x[k]);
    }
    let ikh = Matrix6::identity() - gain;
    let p = symmetrize(ikh * state.p * ikh.transpose() + gain * r * gain.transpose());
    Ok(KfState { x, p })
}

/// Filters a sequence: per step, predict then update with each camera in order.
/// Emits the posterior mean after every step.
pub fn kf_fuse_sequence(
    steps: &[Vec<Measurement>],
    model: &ProcessModel,
    prior: &KfState,
) -> Result<Vec<RelativePose6>, BaselineError> {
    if steps.is_empty() {
        return Err(BaselineError::Invalid("empty sequence".into()));
    }
    let mut state = *prior;
    let mut out = Vec::with_capacity(steps.len());
    for (t, cams) in steps.iter().enumerate() {
        if cams.is_empty() {
            return Err(BaselineError::Invalid(format!("step {t} has no measurements")));
        }
        state = kf_predict(&state, model);
        for m in cams {
            state = kf_update(&state, m)?;
        }
        out.push(state.pose());
    }
    Ok(out)
}

/// `Σ = (Σᵢ Rᵢ⁻¹)⁻¹`, `mean = Σ Σᵢ Rᵢ⁻¹ zᵢ`.
pub fn inverse_variance_average(ms: &[Measurement]) -> Result<(Vector6<f64>, Matrix6<f64>), BaselineError> {
    if ms.is_empty() {
        return Err(BaselineError::Invalid("no measurements".into()));
    }
    let mut info = Matrix6::zeros();
    let mut vec = Vector6::zeros();
    for m in ms {
        let inv = symmetrize(m.r)
            .cholesky()
            .ok_or_else(|| BaselineError::Numerical("singular measurement covariance".into()))?
            .inverse();
        info += inv;
        vec += inv * m.z;
    }
    let cov = symmetrize(info)
        .cholesky()
        .ok_or_else(|| BaselineError::Numerical("singular information matrix".into()))?
        .inverse();
    Ok((cov * vec, symmetrize(cov)))
}

/// Picks the diagonal process noise with the lowest translational RMSE over
/// `sequences` (measurements paired with true relative poses).
pub fn tune_process_noise(
    sequences: &[(Vec<Vec<Measurement>>, Vec<[f64; 6]>)],
    translation_grid: &[f64],
    rotation_grid: &[f64],
    prior: &KfState,
) -> Result<(ProcessModel, f64), BaselineError> {
    let mut best: Option<(ProcessModel, f64)> = None;
    for &qt in translation_grid {
        for &qr in rotation_grid {
            let model = ProcessModel::diagonal(qt, qr)?;
            let mut sq = 0.0;
            let mut n = 0usize;
            for (steps, truth) in sequences {
                if steps.len() != truth.len() {
                    return Err(BaselineError::Invalid(format!(
                        "{} measurement steps for {} targets",
                        steps.len(),
                        truth.len()
                    )));
                }
                for (est, y) in kf_fuse_sequence(steps, &model, prior)?.iter().zip(truth) {
                    let e = est.to_array();
                    sq += (0..3).map(|k| (e[k] - y[k]).powi(2)).sum::<f64>();
                    n += 1;
                }
            }
            let rmse = (sq / n.max(1) as f64).sqrt();
            if best.as_ref().is_none_or(|(_, b)| rmse < *b) {
                best = Some((model, rmse));
            }
        }
    }
    best.ok_or_else(|| BaselineError::Invalid("empty search grid".into()))
}
