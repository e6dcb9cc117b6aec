use mcfuse::baselines::{kf_fuse_sequence, KfState, Measurement, ProcessModel};
use mcfuse::fusion::{fusion_inputs, predict_sequence, scenario_mixtures, train_fusion, FusionArch, FusionSeries, FusionTrainConfig};
use mcfuse::geometry::{accumulate, rpe_translation, tum, AbsolutePose};
use mcfuse::mdn::{train_mdn, CameraMdn, MdnArch, MdnTrainConfig, SeriesRef};
use mcfuse::simulator::{
    generate_trajectory, observe, read_scenario, write_scenario, CameraRig, Condition, ConditionProfile, SimScenario,
};

fn scenarios(rig: &CameraRig, n: usize, base: u64) -> Vec<SimScenario> {
    (0..n)
        .map(|i| {
            let cond = ConditionProfile::standard(Condition::ALL[i % 3], rig);
            let traj = generate_trajectory(25, 0.1, base + i as u64).unwrap();
            observe(&traj, rig, &cond, base + i as u64).unwrap()
        })
        .collect()
}

fn targets(s: &SimScenario) -> Vec<[f64; 6]> {
    s.trajectory.relative_poses().iter().map(|r| r.to_array()).collect()
}

#[test]
fn scenario_files_round_trip() {
    let rig = CameraRig::default_six(12, 3);
    let s = &scenarios(&rig, 1, 40)[0];
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path(), s, &rig, "abc123").unwrap();
    let (back, meta) = read_scenario(dir.path()).unwrap();
    assert_eq!(meta.config_hash, "abc123");
    assert_eq!(meta.steps, s.steps());
    assert_eq!(meta.rig, rig);
    assert_eq!(back.sequences.len(), rig.len());
    for (a, b) in back.sequences.iter().zip(&s.sequences) {
        assert_eq!(a.features, b.features);
    }
    let gt = tum::read_trajectory(&dir.path().join("ground_truth.txt")).unwrap();
    assert_eq!(gt.len(), s.trajectory.len());
}

#[test]
fn heads_fusion_and_filter_run_end_to_end() {
    let rig = CameraRig::default_six(12, 5);
    let train = scenarios(&rig, 6, 100);
    let val = scenarios(&rig, 3, 200);
    let test = scenarios(&rig, 3, 300);
    let arch = MdnArch { feature_dim: 12, hidden: 6, window: 3, components: 2 };
    let cfg = MdnTrainConfig { epochs: 2, ..MdnTrainConfig::default() };
    let tt: Vec<Vec<[f64; 6]>> = train.iter().map(targets).collect();
    let vt: Vec<Vec<[f64; 6]>> = val.iter().map(targets).collect();
    let heads: Vec<CameraMdn> = (0..rig.len())
        .map(|c| {
            let tr: Vec<SeriesRef> = train
                .iter()
                .zip(&tt)
                .map(|(s, t)| SeriesRef { features: &s.sequences[c].features, targets: t })
                .collect();
            let va: Vec<SeriesRef> = val
                .iter()
                .zip(&vt)
                .map(|(s, t)| SeriesRef { features: &s.sequences[c].features, targets: t })
                .collect();
            let (m, log) = train_mdn(&rig.cameras[c].name, arch, &cfg, &tr, &va, c as u64).unwrap();
            assert_eq!(log.len(), 2);
            m
        })
        .collect();

    let inputs = |s: &SimScenario| fusion_inputs(&scenario_mixtures(s, &heads).unwrap()).unwrap();
    let tr_in: Vec<_> = train.iter().map(inputs).collect();
    let va_in: Vec<_> = val.iter().map(inputs).collect();
    let tr: Vec<FusionSeries> = tr_in.iter().zip(&tt).map(|(i, t)| FusionSeries { inputs: i, targets: t }).collect();
    let va: Vec<FusionSeries> = va_in.iter().zip(&vt).map(|(i, t)| FusionSeries { inputs: i, targets: t }).collect();
    let farch = FusionArch { cameras: 6, components: 2, latent: 8, hidden: 8, dropout: 0.1 };
    let fcfg = FusionTrainConfig { epochs: 2, ..FusionTrainConfig::default() };
    let (net, log) = train_fusion(farch, &fcfg, &tr, &va, 9).unwrap();
    assert_eq!(log.len(), 2);

    for s in &test {
        let fused = predict_sequence(s, &heads, &net).unwrap();
        assert_eq!(fused.len(), s.trajectory.len());
        assert_eq!(fused.timestamps(), s.trajectory.timestamps());
        let stats = rpe_translation(&fused, &s.trajectory, 1).unwrap();
        assert!(stats.rmse.is_finite());

        let mix = scenario_mixtures(s, &heads).unwrap();
        let steps: Vec<Vec<Measurement>> = (0..s.steps())
            .map(|t| mix.iter().map(|m| Measurement::from_mixture(&m[t])).collect())
            .collect();
        let q = ProcessModel::diagonal(1e-2, 1e-5).unwrap();
        let rels = kf_fuse_sequence(&steps, &q, &KfState::diffuse(1e3)).unwrap();
        let ekf = accumulate(&AbsolutePose::identity(), &rels)
            .with_timestamps(s.trajectory.timestamps().to_vec())
            .unwrap();
        assert!(rpe_translation(&ekf, &s.trajectory, 1).unwrap().rmse.is_finite());
    }
}
