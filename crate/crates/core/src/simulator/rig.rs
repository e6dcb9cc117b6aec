use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::AbsolutePose;

/// Camera names of the default six-camera surround rig, in rig order.
pub const DEFAULT_CAMERAS: [&str; 6] = [
    "FRONT",
    "FRONT_LEFT",
    "FRONT_RIGHT",
    "BACK",
    "BACK_LEFT",
    "BACK_RIGHT",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub name: String,
    /// Camera pose in the vehicle body frame.
    pub extrinsic: AbsolutePose,
    /// Per-axis noise std-dev: translation (m) then rotation (rad).
    pub base_noise: [f64; 6],
}

impl CameraSpec {
    /// True for cameras looking sideways (names containing LEFT or RIGHT).
    pub fn is_side(&self) -> bool {
        self.name.contains("LEFT") || self.name.contains("RIGHT")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<CameraSpec>,
    /// Width of each camera's feature vector.
    pub feature_dim: usize,
    /// Seed of the per-camera feature maps.
    pub seed: u64,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraSpec>, feature_dim: usize, seed: u64) -> Result<Self, SimError> {
        let rig = Self {
            cameras,
            feature_dim,
            seed,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cameras.is_empty() {
            return Err(SimError::Config("rig has no cameras".into()));
        }
        if self.feature_dim < 6 {
            return Err(SimError::Config(format!(
                "feature_dim {} is below the pose dimension 6",
                self.feature_dim
            )));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|c| c.name == cam.name) {
                return Err(SimError::Config(format!("duplicate camera {}", cam.name)));
            }
            if !cam.base_noise.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(SimError::Config(format!(
                    "camera {} noise std-devs must be positive",
                    cam.name
                )));
            }
            AbsolutePose::new(cam.extrinsic.rotation, cam.extrinsic.translation)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.cameras.iter().map(|c| c.name.as_str()).collect()
    }

    /// Six surround cameras. Translation noise grows from the front camera to
    /// the rear-left one; rotation noise is 1/20 of the translation noise.
    pub fn default_six(feature_dim: usize, seed: u64) -> Self {
        let layout: [(f64, f64, f64, f64); 6] = [
            (1.7, 0.0, 0.0, 0.08),
            (1.5, 0.5, 55.0, 0.10),
            (1.5, -0.5, -55.0, 0.10),
            (-1.0, 0.0, 180.0, 0.09),
            (-0.9, 0.5, 110.0, 0.12),
            (-0.9, -0.5, -110.0, 0.10),
        ];
        let cameras = DEFAULT_CAMERAS
            .iter()
            .zip(layout)
            .map(|(name, (x, y, yaw_deg, trans_std))| {
                let rot_std = trans_std / 20.0;
                CameraSpec {
                    name: name.to_string(),
                    extrinsic: AbsolutePose::from_euler(
                        Vector3::new(0.0, 0.0, yaw_deg * PI / 180.0),
                        Vector3::new(x, y, 1.5),
                    ),
                    base_noise: [trans_std, trans_std, trans_std, rot_std, rot_std, rot_std],
                }
            })
            .collect();
        Self {
            cameras,
            feature_dim,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Daylight,
    Rain,
    Night,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Daylight, Condition::Rain, Condition::Night];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Daylight => "daylight",
            Condition::Rain => "rain",
            Condition::Night => "night",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub label: Condition,
    /// One multiplier per camera, in rig order.
    pub noise_multiplier: Vec<f64>,
    pub outlier_rate: f64,
    pub outlier_scale: f64,
}

impl ConditionProfile {
    pub fn validate(&self, rig: &CameraRig) -> Result<(), SimError> {
        if self.noise_multiplier.len() != rig.len() {
            return Err(SimError::Config(format!(
                "{} profile has {} multipliers for {} cameras",
                self.label,
                self.noise_multiplier.len(),
                rig.len()
            )));
        }
        if !self.noise_multiplier.iter().all(|m| m.is_finite() && *m > 0.0) {
            return Err(SimError::Config(format!(
                "{} noise multipliers must be positive",
                self.label
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(SimError::Config(format!(
                "{} outlier rate {} outside [0, 1]",
                self.label, self.outlier_rate
            )));
        }
        if !(self.outlier_scale >= 1.0 && self.outlier_scale.is_finite()) {
            return Err(SimError::Config(format!(
                "{} outlier scale {} below 1",
                self.label, self.outlier_scale
            )));
        }
        Ok(())
    }

    /// The stock profile for `label`, laid out for `rig`'s cameras.
    ///
    /// Night degrades side cameras (4.0) more than front/back ones (1.5).
    pub fn standard(label: Condition, rig: &CameraRig) -> Self {
        let (outlier_rate, mult): (f64, Box<dyn Fn(&CameraSpec) -> f64>) = match label {
            Condition::Daylight => (0.01, Box::new(|_| 1.0)),
            Condition::Rain => (0.05, Box::new(|_| 2.0)),
            Condition::Night => (
                0.10,
                Box::new(|c: &CameraSpec| if c.is_side() { 4.0 } else { 1.5 }),
            ),
        };
        Self {
            label,
            noise_multiplier: rig.cameras.iter().map(|c| mult(c)).collect(),
            outlier_rate,
            outlier_scale: 10.0,
        }
    }
}

/// Daylight, rain and night profiles for the default six-camera rig.
pub fn default_conditions() -> [ConditionProfile; 3] {
    let rig = CameraRig::default_six(32, 0);
    Condition::ALL.map(|c| ConditionProfile::standard(c, &rig))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles() {
        let [day, rain, night] = default_conditions();
        assert_eq!(day.label, Condition::Daylight);
        assert_eq!(rain.label, Condition::Rain);
        assert_eq!(night.label, Condition::Night);
        assert!(day.noise_multiplier.iter().all(|m| *m == 1.0));
        assert!(rain.noise_multiplier.iter().all(|m| *m == 2.0));
        assert_eq!(night.noise_multiplier, vec![1.5, 4.0, 4.0, 1.5, 4.0, 4.0]);
        assert_eq!(
            [day.outlier_rate, rain.outlier_rate, night.outlier_rate],
            [0.01, 0.05, 0.10]
        );
        let rig = CameraRig::default_six(32, 0);
        for p in [&day, &rain, &night] {
            p.validate(&rig).unwrap();
        }
        for (n, cam) in rig.cameras.iter().enumerate() {
            if cam.is_side() {
                assert!(night.noise_multiplier[n] > day.noise_multiplier[n]);
            }
        }
    }

    #[test]
    fn rig_validation() {
        let rig = CameraRig::default_six(32, 1);
        rig.validate().unwrap();
        assert_eq!(rig.names(), DEFAULT_CAMERAS.to_vec());
        let mut bad = rig.clone();
        bad.cameras[2].base_noise[0] = 0.0;
        assert!(bad.validate().is_err());
        let mut dup = rig.clone();
        dup.cameras[1].name = "FRONT".into();
        assert!(dup.validate().is_err());
        assert!(CameraRig::new(vec![], 32, 0).is_err());
        assert!(CameraRig::new(rig.cameras.clone(), 4, 0).is_err());
    }

    #[test]
    fn profile_validation() {
        let rig = CameraRig::default_six(32, 1);
        let mut p = ConditionProfile::standard(Condition::Rain, &rig);
        p.outlier_rate = 1.5;
        assert!(p.validate(&rig).is_err());
        let mut p = ConditionProfile::standard(Condition::Rain, &rig);
        p.noise_multiplier.pop();
        assert!(p.validate(&rig).is_err());
        let mut p = ConditionProfile::standard(Condition::Rain, &rig);
        p.outlier_scale = 0.5;
        assert!(p.validate(&rig).is_err());
    }

    #[test]
    fn condition_labels_round_trip() {
        for c in Condition::ALL {
            assert_eq!(Condition::parse(c.as_str()), Some(c));
        }
        assert_eq!(serde_json::to_string(&Condition::Night).unwrap(), "\"night\"");
    }
}
