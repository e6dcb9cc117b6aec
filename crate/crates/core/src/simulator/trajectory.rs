use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{euler_to_matrix, AbsolutePose, Trajectory};
use crate::seeding::rng_for;

/// 63 km/h in m/s.
pub const MAX_SPEED: f64 = 17.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_yaw_rate: f64,
    /// Per-step probability of choosing a new target speed.
    pub retarget_prob: f64,
    /// Probability that a new target is a stop.
    pub stationary_prob: f64,
    /// Inclusive range of steps a stop lasts.
    pub stop_steps: (usize, usize),
    pub max_pitch: f64,
    pub max_roll: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            max_speed: MAX_SPEED,
            max_accel: 3.0,
            max_yaw_rate: 0.4,
            retarget_prob: 0.03,
            stationary_prob: 0.15,
            stop_steps: (5, 30),
            max_pitch: 0.08,
            max_roll: 0.04,
        }
    }
}

/// Random smooth drive with the default configuration.
pub fn generate_trajectory(steps: usize, dt: f64, seed: u64) -> Result<Trajectory, SimError> {
    generate_trajectory_with(&TrajectoryConfig::default(), steps, dt, seed)
}

/// Random smooth drive of `steps` poses spaced `dt` seconds apart.
///
/// Speed follows randomly re-drawn targets under bounded acceleration and
/// never leaves `[0, max_speed]`; the heading integrates a mean-reverting yaw
/// rate. Stops hold the vehicle perfectly still.
pub fn generate_trajectory_with(
    cfg: &TrajectoryConfig,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if steps < 2 {
        return Err(SimError::Config(format!("need at least 2 poses, got {steps}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("dt must be positive, got {dt}")));
    }
    if !(cfg.max_speed > 0.0 && cfg.max_accel > 0.0) {
        return Err(SimError::Config("speed and acceleration bounds must be positive".into()));
    }
    let mut rng = rng_for(seed, 0x7472616a);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut position = Vector3::zeros();
    let (mut roll, mut pitch, mut yaw) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut speed = rng.random_range(0.0..cfg.max_speed * 0.5);
    let mut target = rng.random_range(2.0..cfg.max_speed);
    let mut yaw_rate = 0.0_f64;
    let mut stop_left = 0usize;

    let mut poses = Vec::with_capacity(steps);
    let mut timestamps = Vec::with_capacity(steps);
    poses.push(AbsolutePose::identity());
    timestamps.push(0.0);

    for k in 1..steps {
        if stop_left > 0 && speed == 0.0 {
            stop_left -= 1;
            if stop_left == 0 {
                target = rng.random_range(2.0..cfg.max_speed);
            }
        } else if rng.random::<f64>() < cfg.retarget_prob {
            if rng.random::<f64>() < cfg.stationary_prob {
                target = 0.0;
                stop_left = rng.random_range(cfg.stop_steps.0..=cfg.stop_steps.1);
            } else {
                target = rng.random_range(2.0..cfg.max_speed);
                stop_left = 0;
            }
        }

        let jitter = 0.3 * unit.sample(&mut rng);
        let accel = ((target - speed) / 2.0 + jitter).clamp(-cfg.max_accel, cfg.max_accel);
        speed = (speed + accel * dt).clamp(0.0, cfg.max_speed);
        if target == 0.0 && speed < 0.5 {
            speed = 0.0;
        }

        if speed > 0.0 {
            yaw_rate = (0.97 * yaw_rate + 0.03 * unit.sample(&mut rng))
                .clamp(-cfg.max_yaw_rate, cfg.max_yaw_rate);
            yaw += yaw_rate * dt;
            pitch = (0.98 * pitch + 0.003 * unit.sample(&mut rng)).clamp(-cfg.max_pitch, cfg.max_pitch);
            roll = (0.98 * roll + 0.002 * unit.sample(&mut rng)).clamp(-cfg.max_roll, cfg.max_roll);
            let heading = euler_to_matrix(&Vector3::new(roll, pitch, yaw));
            position += heading * Vector3::new(speed * dt, 0.0, 0.0);
        }
        let rotation = euler_to_matrix(&Vector3::new(roll, pitch, yaw));
        poses.push(AbsolutePose {
            rotation,
            translation: position,
        });
        timestamps.push(k as f64 * dt);
    }
    Ok(Trajectory::new(timestamps, poses)?)
}
