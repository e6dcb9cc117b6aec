//! In-memory experiment pipeline: scenario generation, staged training and
//! per-method evaluation. The commands wrap these with file I/O.

use mcfuse::baselines::{inverse_variance_average, kf_fuse_sequence, tune_process_noise, KfState, Measurement, ProcessModel};
use mcfuse::fusion::{fuse_forward, fusion_inputs, train_fusion, FusionNet, FusionSeries};
use mcfuse::geometry::{accumulate, rpe_translation_errors, RelativePose6, Trajectory};
use mcfuse::mdn::{mixture_covariance, train_mdn, CameraMdn, MixtureParams, SeriesRef};
use mcfuse::neuralcore::EpochRecord;
use mcfuse::seeding::derive_seed;
use mcfuse::simulator::{generate_trajectory, observe, CameraRig, Condition, SimScenario};

use crate::config::{ExperimentConfig, SplitCounts};
use crate::metrics::{MethodKind, MetricsReport};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Split::Train => 0x7472_0000,
            Split::Val => 0x7661_0000,
            Split::Test => 0x7465_0000,
        }
    }

    pub fn counts(&self, cfg: &ExperimentConfig) -> SplitCounts {
        match self {
            Split::Train => cfg.data.train,
            Split::Val => cfg.data.val,
            Split::Test => cfg.data.test,
        }
    }
}

/// Directory-safe scenario name, e.g. `0007_night`.
pub fn scenario_name(index: usize, condition: Condition) -> String {
    format!("{index:04}_{condition}")
}

/// Scenarios for one split, daylight first, then rain, then night.
pub fn generate_split(cfg: &ExperimentConfig, split: Split) -> Result<Vec<SimScenario>, CliError> {
    let rig = cfg.rig();
    let counts = split.counts(cfg);
    let mut out = Vec::with_capacity(counts.total());
    for c in Condition::ALL {
        let profile = cfg.profile(c);
        for _ in 0..counts.get(c) {
            let profile = profile.as_ref().map_err(|e| CliError::Config(e.to_string()))?;
            let seed = derive_seed(cfg.seed, split.stream() + out.len() as u64);
            let traj = generate_trajectory(cfg.data.steps + 1, cfg.data.dt, seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            out.push(observe(&traj, &rig, profile, seed).map_err(|e| CliError::Data(e.to_string()))?);
        }
    }
    Ok(out)
}

pub fn targets(s: &SimScenario) -> Vec<[f64; 6]> {
    s.trajectory.relative_poses().iter().map(|r| r.to_array()).collect()
}

fn camera_series<'a>(data: &'a [SimScenario], targets: &'a [Vec<[f64; 6]>], cam: usize) -> Vec<SeriesRef<'a>> {
    data.iter()
        .zip(targets)
        .map(|(s, t)| SeriesRef {
            features: &s.sequences[cam].features,
            targets: t,
        })
        .collect()
}

/// Stage one: an independent network per camera.
pub fn train_heads(
    cfg: &ExperimentConfig,
    train: &[SimScenario],
    val: &[SimScenario],
) -> Result<Vec<(CameraMdn, Vec<EpochRecord>)>, CliError> {
    let rig = cfg.rig();
    let tt: Vec<_> = train.iter().map(targets).collect();
    let vt: Vec<_> = val.iter().map(targets).collect();
    rig.cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let seed = derive_seed(cfg.seed, 0x6d64_6e00 + i as u64);
            train_mdn(
                &cam.name,
                cfg.mdn_arch(),
                &cfg.mdn.train,
                &camera_series(train, &tt, i),
                &camera_series(val, &vt, i),
                seed,
            )
            .map_err(|e| CliError::Training(format!("camera {}: {e}", cam.name)))
        })
        .collect()
}

/// Per camera (rig order), the mixture at every step.
pub fn scenario_mixtures(heads: &[CameraMdn], s: &SimScenario) -> Result<Vec<Vec<MixtureParams>>, CliError> {
    mcfuse::fusion::scenario_mixtures(s, heads).map_err(|e| CliError::Data(e.to_string()))
}

pub fn all_mixtures(heads: &[CameraMdn], data: &[SimScenario]) -> Result<Vec<Vec<Vec<MixtureParams>>>, CliError> {
    data.iter().map(|s| scenario_mixtures(heads, s)).collect()
}

/// Stage two: the fusion network on frozen per-camera mixtures.
pub fn train_fusion_stage(
    cfg: &ExperimentConfig,
    train_mix: &[Vec<Vec<MixtureParams>>],
    train: &[SimScenario],
    val_mix: &[Vec<Vec<MixtureParams>>],
    val: &[SimScenario],
) -> Result<(FusionNet, Vec<EpochRecord>), CliError> {
    let build = |mix: &[Vec<Vec<MixtureParams>>], data: &[SimScenario]| -> Result<Vec<_>, CliError> {
        mix.iter()
            .zip(data)
            .map(|(m, s)| Ok((fusion_inputs(m).map_err(|e| CliError::Data(e.to_string()))?, targets(s))))
            .collect()
    };
    let tr = build(train_mix, train)?;
    let va = build(val_mix, val)?;
    train_fusion(
        cfg.fusion_arch(),
        &cfg.fusion.train,
        &series_refs(&tr),
        &series_refs(&va),
        derive_seed(cfg.seed, 0x6675_7300),
    )
    .map_err(|e| CliError::Training(format!("fusion: {e}")))
}

fn series_refs(d: &[(ndarray::Array2<f64>, Vec<[f64; 6]>)]) -> Vec<FusionSeries<'_>> {
    d.iter()
        .map(|(x, y)| FusionSeries { inputs: x, targets: y })
        .collect()
}

pub fn measurements(mix: &[Vec<MixtureParams>]) -> Vec<Vec<Measurement>> {
    let steps = mix.first().map_or(0, Vec::len);
    (0..steps)
        .map(|t| mix.iter().map(|cam| Measurement::from_mixture(&cam[t])).collect())
        .collect()
}

pub fn ekf_prior(cfg: &ExperimentConfig) -> KfState {
    KfState::diffuse(cfg.ekf.prior_variance)
}

/// Grid search over diagonal process noise on the given (validation) scenarios.
pub fn tune_ekf(cfg: &ExperimentConfig, mix: &[Vec<Vec<MixtureParams>>], data: &[SimScenario]) -> Result<ProcessModel, CliError> {
    let seqs: Vec<_> = mix.iter().zip(data).map(|(m, s)| (measurements(m), targets(s))).collect();
    if seqs.is_empty() {
        return ProcessModel::diagonal(cfg.ekf.translation_grid[0], cfg.ekf.rotation_grid[0])
            .map_err(|e| CliError::Config(e.to_string()));
    }
    tune_process_noise(&seqs, &cfg.ekf.translation_grid, &cfg.ekf.rotation_grid, &ekf_prior(cfg))
        .map(|(m, _)| m)
        .map_err(|e| CliError::Training(format!("ekf tuning: {e}")))
}

/// Trained artifacts needed to evaluate every method.
pub struct Models<'a> {
    pub heads: &'a [CameraMdn],
    pub fusion: Option<&'a FusionNet>,
    pub ekf: Option<&'a ProcessModel>,
    pub prior: KfState,
}

fn pose_array(rels: &[[f64; 6]]) -> Result<Vec<RelativePose6>, CliError> {
    rels.iter()
        .map(|r| RelativePose6::from_array(*r).map_err(|e| CliError::Data(e.to_string())))
        .collect()
}

fn to_trajectory(s: &SimScenario, rels: &[RelativePose6]) -> Result<Trajectory, CliError> {
    let start = s.trajectory.poses()[0];
    accumulate(&start, rels)
        .with_timestamps(s.trajectory.timestamps().to_vec())
        .map_err(|e| CliError::Data(e.to_string()))
}

/// Estimated trajectory of `method` on one scenario, or `None` when the method
/// cannot run (missing model or numerical failure).
pub fn estimate(
    method: &MethodKind,
    models: &Models,
    s: &SimScenario,
    mix: &[Vec<MixtureParams>],
) -> Result<Option<Trajectory>, CliError> {
    let rels: Vec<RelativePose6> = match method {
        MethodKind::Camera(name) => {
            let i = camera_index(models.heads, name)?;
            mix[i].iter().map(mcfuse::mdn::mixture_mean).collect()
        }
        MethodKind::Raw(name) => {
            let seq = s
                .sequences
                .iter()
                .find(|q| &q.camera == name)
                .ok_or_else(|| CliError::Data(format!("scenario has no camera {name}")))?;
            seq.latent_truth.clone()
        }
        MethodKind::Fusion => {
            let Some(net) = models.fusion else { return Ok(None) };
            let x = fusion_inputs(mix).map_err(|e| CliError::Data(e.to_string()))?;
            match fuse_forward(net, &x) {
                Ok(r) => r,
                Err(_) => return Ok(None),
            }
        }
        MethodKind::Ekf => {
            let Some(q) = models.ekf else { return Ok(None) };
            match kf_fuse_sequence(&measurements(mix), q, &models.prior) {
                Ok(r) => r,
                Err(_) => return Ok(None),
            }
        }
        MethodKind::Ivw => {
            let mut out = Vec::new();
            for step in measurements(mix) {
                match inverse_variance_average(&step) {
                    Ok((m, _)) => out.push(std::array::from_fn(|k| m[k])),
                    Err(_) => return Ok(None),
                }
            }
            pose_array(&out)?
        }
    };
    to_trajectory(s, &rels).map(Some)
}

fn camera_index(heads: &[CameraMdn], name: &str) -> Result<usize, CliError> {
    heads
        .iter()
        .position(|h| h.camera == name)
        .ok_or_else(|| CliError::Data(format!("no trained head for camera {name}")))
}

/// Per-step translational RPE of every method on every scenario.
pub struct Evaluation {
    pub report: MetricsReport,
    /// `(scenario index, method label, trajectory)` for each run that succeeded.
    pub trajectories: Vec<(usize, String, Trajectory)>,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    models: &Models,
    methods: &[MethodKind],
    test: &[SimScenario],
    test_mix: &[Vec<Vec<MixtureParams>>],
) -> Result<Evaluation, CliError> {
    let mut errors: Vec<Vec<Option<Vec<f64>>>> = vec![vec![Some(Vec::new()); Condition::ALL.len()]; methods.len()];
    let mut present = [false; 3];
    let mut trajectories = Vec::new();
    for (si, (s, mix)) in test.iter().zip(test_mix).enumerate() {
        let ci = Condition::ALL.iter().position(|c| *c == s.condition.label).expect("known condition");
        present[ci] = true;
        for (mi, m) in methods.iter().enumerate() {
            match estimate(m, models, s, mix)? {
                Some(traj) => {
                    let e = rpe_translation_errors(&traj, &s.trajectory, 1).map_err(|e| CliError::Data(e.to_string()))?;
                    if let Some(acc) = errors[mi][ci].as_mut() {
                        acc.extend(e);
                    }
                    trajectories.push((si, m.label(), traj));
                }
                None => errors[mi][ci] = None,
            }
        }
    }
    let report = MetricsReport::from_errors(cfg.hash(), cfg.seed, methods, &errors, &present);
    Ok(Evaluation { report, trajectories })
}

/// Average trace of the predicted covariance per (camera, condition), rig order.
pub fn predicted_variance(test: &[SimScenario], test_mix: &[Vec<Vec<MixtureParams>>], cameras: usize) -> Vec<[Option<f64>; 3]> {
    let mut sum = vec![[0.0; 3]; cameras];
    let mut count = vec![[0usize; 3]; cameras];
    for (s, mix) in test.iter().zip(test_mix) {
        let ci = Condition::ALL.iter().position(|c| *c == s.condition.label).expect("known condition");
        for (cam, seq) in mix.iter().enumerate() {
            for p in seq {
                sum[cam][ci] += mixture_covariance(p).trace();
                count[cam][ci] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, n)| std::array::from_fn(|c| (n[c] > 0).then(|| s[c] / n[c] as f64)))
        .collect()
}

/// Configured translational noise std-dev per (camera, condition), rig order.
pub fn configured_noise(cfg: &ExperimentConfig, rig: &CameraRig) -> Result<Vec<[f64; 3]>, CliError> {
    let profiles: Vec<_> = Condition::ALL.iter().map(|c| cfg.profile(*c)).collect::<Result<_, _>>()?;
    Ok(rig
        .cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| std::array::from_fn(|c| cam.base_noise[0] * profiles[c].noise_multiplier[i]))
        .collect())
}

/// Everything one seeded run produces, kept in memory.
pub struct ExperimentRun {
    pub heads: Vec<CameraMdn>,
    pub mdn_logs: Vec<Vec<EpochRecord>>,
    pub fusion: FusionNet,
    pub fusion_log: Vec<EpochRecord>,
    pub ekf: ProcessModel,
    pub test: Vec<SimScenario>,
    pub test_mix: Vec<Vec<Vec<MixtureParams>>>,
    pub evaluation: Evaluation,
}

/// Simulate, train both stages, tune the filter and evaluate all methods.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun, CliError> {
    cfg.validate()?;
    let train = generate_split(cfg, Split::Train)?;
    let val = generate_split(cfg, Split::Val)?;
    let test = generate_split(cfg, Split::Test)?;
    let trained = train_heads(cfg, &train, &val)?;
    let (heads, mdn_logs): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let train_mix = all_mixtures(&heads, &train)?;
    let val_mix = all_mixtures(&heads, &val)?;
    let (fusion, fusion_log) = train_fusion_stage(cfg, &train_mix, &train, &val_mix, &val)?;
    let ekf = tune_ekf(cfg, &val_mix, &val)?;
    let test_mix = all_mixtures(&heads, &test)?;
    let methods = MethodKind::all(&cfg.rig());
    let evaluation = evaluate(
        cfg,
        &Models {
            heads: &heads,
            fusion: Some(&fusion),
            ekf: Some(&ekf),
            prior: ekf_prior(cfg),
        },
        &methods,
        &test,
        &test_mix,
    )?;
    Ok(ExperimentRun {
        heads,
        mdn_logs,
        fusion,
        fusion_log,
        ekf,
        test,
        test_mix,
        evaluation,
    })
}
