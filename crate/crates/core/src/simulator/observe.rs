use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{CameraRig, ConditionProfile, SimError};
use crate::geometry::{RelativePose6, Trajectory};
use crate::seeding::rng_for;

/// Pre-activation scale of each pose axis in the random feature map.
const COLUMN_SCALE: [f64; 6] = [0.4, 1.0, 1.0, 8.0, 8.0, 8.0];
const BIAS_STD: f64 = 0.1;

/// Fixed affine map followed by tanh: `f = tanh(A y + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// D × 6.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl FeatureMap {
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let weights = Array2::from_shape_fn((dim, 6), |(_, j)| COLUMN_SCALE[j] * unit.sample(rng));
        let bias = Array1::from_shape_fn(dim, |_| BIAS_STD * unit.sample(rng));
        Self { weights, bias }
    }

    /// `A = [I6; 0]`, `b = 0`.
    pub fn identity_extension(dim: usize) -> Self {
        let weights = Array2::from_shape_fn((dim, 6), |(i, j)| if i == j { 1.0 } else { 0.0 });
        Self {
            weights,
            bias: Array1::zeros(dim),
        }
    }

    /// Map drawn for camera `index` of a rig seeded with `rig_seed`.
    pub fn for_camera(dim: usize, rig_seed: u64, index: usize) -> Self {
        Self::random(dim, &mut rng_for(rig_seed, 0x6d61_7000 + index as u64))
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, y: &[f64; 6]) -> Array1<f64> {
        let y = ndarray::ArrayView1::from(&y[..]);
        (self.weights.dot(&y) + &self.bias).mapv(f64::tanh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub camera: String,
    /// T × D, one row per step.
    pub features: Array2<f64>,
    /// The noisy relative pose each row encodes.
    pub latent_truth: Vec<RelativePose6>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    /// Ground truth with T + 1 poses; step t moves pose t to pose t + 1.
    pub trajectory: Trajectory,
    pub sequences: Vec<FeatureSequence>,
    pub condition: ConditionProfile,
    pub seed: u64,
}

impl SimScenario {
    /// Number of relative steps T.
    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// Observes `traj` through every camera of `rig` using the rig's own maps.
pub fn observe(
    traj: &Trajectory,
    rig: &CameraRig,
    cond: &ConditionProfile,
    seed: u64,
) -> Result<SimScenario, SimError> {
    let maps: Vec<FeatureMap> = (0..rig.len())
        .map(|n| FeatureMap::for_camera(rig.feature_dim, rig.seed, n))
        .collect();
    observe_with_maps(traj, rig, cond, &maps, seed)
}

/// As [`observe`], with explicit per-camera feature maps.
pub fn observe_with_maps(
    traj: &Trajectory,
    rig: &CameraRig,
    cond: &ConditionProfile,
    maps: &[FeatureMap],
    seed: u64,
) -> Result<SimScenario, SimError> {
    rig.validate()?;
    cond.validate(rig)?;
    if traj.len() < 2 {
        return Err(SimError::Config(format!(
            "trajectory needs at least 2 poses, got {}",
            traj.len()
        )));
    }
    if maps.len() != rig.len() {
        return Err(SimError::Config(format!(
            "{} feature maps for {} cameras",
            maps.len(),
            rig.len()
        )));
    }
    let truth = traj.relative_poses();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sequences = Vec::with_capacity(rig.len());
    for (n, (cam, map)) in rig.cameras.iter().zip(maps).enumerate() {
        if map.weights.dim() != (map.dim(), 6) {
            return Err(SimError::Config(format!("feature map for {} is not D×6", cam.name)));
        }
        let mut rng = rng_for(seed, n as u64);
        let mut features = Array2::zeros((truth.len(), map.dim()));
        let mut latent = Vec::with_capacity(truth.len());
        for (t, rel) in truth.iter().enumerate() {
            let inflate = if rng.random::<f64>() < cond.outlier_rate {
                cond.outlier_scale
            } else {
                1.0
            };
            let clean = rel.to_array();
            let mut noisy = [0.0; 6];
            for k in 0..6 {
                let std = cam.base_noise[k] * cond.noise_multiplier[n] * inflate;
                noisy[k] = clean[k] + std * unit.sample(&mut rng);
            }
            let y = RelativePose6 {
                rho: Vector3::new(noisy[0], noisy[1], noisy[2]),
                phi: Vector3::new(noisy[3], noisy[4], noisy[5]),
            };
            features.row_mut(t).assign(&map.apply(&noisy));
            latent.push(y);
        }
        sequences.push(FeatureSequence {
            camera: cam.name.clone(),
            features,
            latent_truth: latent,
        });
    }
    Ok(SimScenario {
        trajectory: traj.clone(),
        sequences,
        condition: cond.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_trajectory, Condition};

    fn quiet_profile(rig: &CameraRig) -> ConditionProfile {
        ConditionProfile {
            label: Condition::Daylight,
            noise_multiplier: vec![1.0; rig.len()],
            outlier_rate: 0.0,
            outlier_scale: 1.0,
        }
    }

    #[test]
    fn zero_noise_identity_map_gives_tanh_of_truth() {
        let mut rig = CameraRig::default_six(8, 3);
        for cam in &mut rig.cameras {
            cam.base_noise = [1e-300; 6];
        }
        let traj = generate_trajectory(50, 0.1, 4).unwrap();
        let maps = vec![FeatureMap::identity_extension(8); rig.len()];
        let sc = observe_with_maps(&traj, &rig, &quiet_profile(&rig), &maps, 5).unwrap();
        let truth = traj.relative_poses();
        for seq in &sc.sequences {
            assert_eq!(seq.features.nrows(), truth.len());
            for (t, rel) in truth.iter().enumerate() {
                let y = rel.to_array();
                for k in 0..6 {
                    assert!((seq.features[[t, k]] - y[k].tanh()).abs() < 1e-12);
                }
                for k in 6..8 {
                    assert_eq!(seq.features[[t, k]], 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let rig = CameraRig::default_six(16, 3);
        let [_, rain, _] = crate::simulator::default_conditions();
        let traj = generate_trajectory(80, 0.1, 4).unwrap();
        let a = observe(&traj, &rig, &rain, 11).unwrap();
        let b = observe(&traj, &rig, &rain, 11).unwrap();
        assert_eq!(a, b);
        let c = observe(&traj, &rig, &rain, 12).unwrap();
        assert_ne!(a.sequences[0].features, c.sequences[0].features);
    }

    #[test]
    fn noise_std_matches_configuration() {
        let rig = CameraRig::default_six(6, 3);
        let mut cond = quiet_profile(&rig);
        cond.noise_multiplier = vec![1.0, 4.0, 4.0, 1.5, 4.0, 4.0];
        let n = 100_000;
        let traj = generate_trajectory(n + 1, 0.1, 8).unwrap();
        let truth = traj.relative_poses();
        let sc = observe(&traj, &rig, &cond, 21).unwrap();
        for (c, seq) in sc.sequences.iter().enumerate().filter(|(c, _)| [0, 4].contains(c)) {
            for k in 0..6 {
                let e: Vec<f64> = seq
                    .latent_truth
                    .iter()
                    .zip(&truth)
                    .map(|(y, g)| y.to_array()[k] - g.to_array()[k])
                    .collect();
                let mean = e.iter().sum::<f64>() / n as f64;
                let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let want = rig.cameras[c].base_noise[k] * cond.noise_multiplier[c];
                // Standard error of a sample std under normality: sigma / sqrt(2(n-1)).
                let se = want / (2.0 * (n as f64 - 1.0)).sqrt();
                assert!(
                    (var.sqrt() - want).abs() < 3.0 * se,
                    "camera {c} axis {k}: {} vs {want}",
                    var.sqrt()
                );
            }
        }
    }

    #[test]
    fn outliers_occur_at_configured_rate() {
        let rig = CameraRig::default_six(6, 3);
        let mut cond = quiet_profile(&rig);
        cond.outlier_rate = 0.2;
        cond.outlier_scale = 1000.0;
        let traj = generate_trajectory(20_001, 0.1, 8).unwrap();
        let truth = traj.relative_poses();
        let sc = observe(&traj, &rig, &cond, 2).unwrap();
        let cam = &rig.cameras[0];
        let big = sc.sequences[0]
            .latent_truth
            .iter()
            .zip(&truth)
            .filter(|(y, g)| (y.rho.x - g.rho.x).abs() > 10.0 * cam.base_noise[0])
            .count() as f64
            / truth.len() as f64;
        // Nearly every inflated draw exceeds 10 base std-devs; clean ones almost never do.
        let p = 0.2 * 0.992;
        let se = (p * (1.0 - p) / truth.len() as f64).sqrt();
        assert!((big - p).abs() < 4.0 * se, "{big}");
    }

    #[test]
    fn zero_noise_features_decode_by_least_squares() {
        let mut rig = CameraRig::default_six(32, 6);
        for cam in &mut rig.cameras {
            cam.base_noise = [1e-300; 6];
        }
        let traj = generate_trajectory(200, 0.1, 1).unwrap();
        let sc = observe(&traj, &rig, &quiet_profile(&rig), 0).unwrap();
        let truth = traj.relative_poses();
        for (n, seq) in sc.sequences.iter().enumerate() {
            let map = FeatureMap::for_camera(32, rig.seed, n);
            let a = nalgebra::DMatrix::from_fn(32, 6, |i, j| map.weights[[i, j]]);
            let svd = a.clone().svd(true, true);
            let mut checked = 0;
            for (t, rel) in truth.iter().enumerate() {
                let pre: Vec<f64> = seq.features.row(t).iter().map(|f| f.atanh()).collect();
                if pre.iter().any(|p| p.tanh().abs() >= 0.99) {
                    continue;
                }
                let rhs = nalgebra::DVector::from_fn(32, |i, _| pre[i] - map.bias[i]);
                let y = svd.solve(&rhs, 1e-12).unwrap();
                let g = rel.to_array();
                for k in 0..6 {
                    assert!((y[k] - g[k]).abs() < 1e-6, "camera {n} step {t}");
                }
                checked += 1;
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let rig = CameraRig::default_six(8, 3);
        let traj = generate_trajectory(10, 0.1, 4).unwrap();
        let mut cond = quiet_profile(&rig);
        cond.noise_multiplier.pop();
        assert!(observe(&traj, &rig, &cond, 0).is_err());
        let maps = vec![FeatureMap::identity_extension(8); 2];
        assert!(observe_with_maps(&traj, &rig, &quiet_profile(&rig), &maps, 0).is_err());
    }
}
