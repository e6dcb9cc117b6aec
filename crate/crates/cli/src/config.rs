use std::collections::BTreeMap;
use std::path::Path;

use mcfuse::fusion::{FusionArch, FusionTrainConfig};
use mcfuse::mdn::{MdnArch, MdnTrainConfig};
use mcfuse::simulator::{CameraRig, Condition, ConditionProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub feature_dim: usize,
    /// Seeds the per-camera feature maps.
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self { feature_dim: 32, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub outlier_rate: f64,
    pub outlier_scale: f64,
    /// Noise multiplier per camera name.
    pub multipliers: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub daylight: usize,
    pub rain: usize,
    pub night: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            daylight: 0,
            rain: 0,
            night: 0,
        }
    }
}

impl SplitCounts {
    pub const fn new(daylight: usize, rain: usize, night: usize) -> Self {
        Self { daylight, rain, night }
    }

    pub fn get(&self, c: Condition) -> usize {
        match c {
            Condition::Daylight => self.daylight,
            Condition::Rain => self.rain,
            Condition::Night => self.night,
        }
    }

    pub fn total(&self) -> usize {
        self.daylight + self.rain + self.night
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Relative steps per scenario; trajectories have one more pose.
    pub steps: usize,
    pub dt: f64,
    pub train: SplitCounts,
    pub val: SplitCounts,
    pub test: SplitCounts,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            dt: 0.1,
            train: SplitCounts::new(48, 24, 24),
            val: SplitCounts::new(4, 2, 4),
            test: SplitCounts::new(64, 12, 24),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnConfig {
    pub hidden: usize,
    pub window: usize,
    pub components: usize,
    pub train: MdnTrainConfig,
}

impl Default for MdnConfig {
    fn default() -> Self {
        let a = MdnArch::default();
        Self {
            hidden: 32,
            window: a.window,
            components: a.components,
            train: MdnTrainConfig {
                epochs: 5,
                ..MdnTrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub latent: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub train: FusionTrainConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let a = FusionArch::default();
        Self {
            latent: a.latent,
            hidden: a.hidden,
            dropout: a.dropout,
            train: FusionTrainConfig {
                epochs: 60,
                batch_size: 16,
                ..FusionTrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Candidate process-noise variances, searched on the validation split.
    pub translation_grid: Vec<f64>,
    pub rotation_grid: Vec<f64>,
    /// Initial state covariance scale (zero mean).
    pub prior_variance: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            translation_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            rotation_grid: vec![1e-7, 1e-6, 1e-5, 1e-4],
            prior_variance: 1e3,
        }
    }
}

/// Everything an experiment depends on. Commands are pure functions of this
/// value and their input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rig: RigConfig,
    pub conditions: BTreeMap<Condition, ConditionConfig>,
    pub data: DataConfig,
    pub mdn: MdnConfig,
    pub fusion: FusionConfig,
    pub ekf: EkfConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rig_cfg = RigConfig::default();
        let rig = CameraRig::default_six(rig_cfg.feature_dim, rig_cfg.seed);
        let conditions = Condition::ALL
            .into_iter()
            .map(|c| {
                let p = ConditionProfile::standard(c, &rig);
                let multipliers = rig
                    .cameras
                    .iter()
                    .zip(&p.noise_multiplier)
                    .map(|(cam, m)| (cam.name.clone(), *m))
                    .collect();
                (
                    c,
                    ConditionConfig {
                        outlier_rate: p.outlier_rate,
                        outlier_scale: p.outlier_scale,
                        multipliers,
                    },
                )
            })
            .collect();
        Self {
            seed: 0,
            rig: rig_cfg,
            conditions,
            data: DataConfig::default(),
            mdn: MdnConfig::default(),
            fusion: FusionConfig::default(),
            ekf: EkfConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn rig(&self) -> CameraRig {
        CameraRig::default_six(self.rig.feature_dim, self.rig.seed)
    }

    pub fn profile(&self, c: Condition) -> Result<ConditionProfile, CliError> {
        let rig = self.rig();
        let cc = self
            .conditions
            .get(&c)
            .ok_or_else(|| CliError::Config(format!("no profile for condition {c}")))?;
        let noise_multiplier = rig
            .cameras
            .iter()
            .map(|cam| {
                cc.multipliers
                    .get(&cam.name)
                    .copied()
                    .ok_or_else(|| CliError::Config(format!("{c} profile has no multiplier for camera {}", cam.name)))
            })
            .collect::<Result<_, _>>()?;
        let p = ConditionProfile {
            label: c,
            noise_multiplier,
            outlier_rate: cc.outlier_rate,
            outlier_scale: cc.outlier_scale,
        };
        p.validate(&rig).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn mdn_arch(&self) -> MdnArch {
        MdnArch {
            feature_dim: self.rig.feature_dim,
            hidden: self.mdn.hidden,
            window: self.mdn.window,
            components: self.mdn.components,
        }
    }

    pub fn fusion_arch(&self) -> FusionArch {
        FusionArch {
            cameras: self.rig().len(),
            components: self.mdn.components,
            latent: self.fusion.latent,
            hidden: self.fusion.hidden,
            dropout: self.fusion.dropout,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let rig = self.rig();
        for (c, cc) in &self.conditions {
            for name in cc.multipliers.keys() {
                if !rig.cameras.iter().any(|cam| &cam.name == name) {
                    return Err(CliError::Config(format!("{c} profile names unknown camera {name}")));
                }
            }
        }
        for c in Condition::ALL {
            let used = [self.data.train, self.data.val, self.data.test].iter().any(|s| s.get(c) > 0);
            if used {
                self.profile(c)?;
            }
        }
        if self.data.steps < 1 || !(self.data.dt > 0.0) {
            return Err(CliError::Config("steps must be at least 1 and dt positive".into()));
        }
        if self.data.train.total() == 0 {
            return Err(CliError::Config("training split is empty".into()));
        }
        if self.mdn.hidden == 0 || self.mdn.window == 0 || self.mdn.components == 0 || self.rig.feature_dim == 0 {
            return Err(CliError::Config("network sizes must be positive".into()));
        }
        if self.ekf.translation_grid.is_empty() || self.ekf.rotation_grid.is_empty() {
            return Err(CliError::Config("process-noise grids must be nonempty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn default_profiles_match_the_simulator() {
        let cfg = ExperimentConfig::default();
        let rig = cfg.rig();
        for c in Condition::ALL {
            assert_eq!(cfg.profile(c).unwrap(), ConditionProfile::standard(c, &rig));
        }
        assert_eq!(cfg.data.test, SplitCounts::new(64, 12, 24));
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[data]\nsteps = 20\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.data.steps, 20);
        assert_eq!(cfg.mdn, MdnConfig::default());
    }

    #[test]
    fn rejects_unknown_cameras_and_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.conditions
            .get_mut(&Condition::Night)
            .unwrap()
            .multipliers
            .insert("ROOF".into(), 1.0);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        assert!(ExperimentConfig::from_toml("sed = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
