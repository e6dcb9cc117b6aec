use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcfuse_cli::config::SplitCounts;
use mcfuse_cli::metrics::{MetricsReport, METRICS_HEADER};
use mcfuse_cli::ExperimentConfig;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 3;
    cfg.data.steps = 20;
    cfg.data.train = SplitCounts::new(2, 1, 1);
    cfg.data.val = SplitCounts::new(1, 1, 1);
    cfg.data.test = SplitCounts::new(2, 1, 1);
    cfg.mdn.hidden = 6;
    cfg.mdn.train.epochs = 2;
    cfg.fusion.latent = 8;
    cfg.fusion.hidden = 8;
    cfg.fusion.train.epochs = 3;
    cfg
}

fn mcfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcfuse")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("experiment.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path.display().to_string()
}

fn error_line(o: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("error line");
    serde_json::from_str(line).expect("machine-readable error")
}

#[test]
fn full_run_writes_metrics_logs_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run_s = run.display().to_string();
    let cfg = small_config();
    let cfg_path = write_config(dir.path(), &cfg);

    let o = mcfuse(&["simulate", "--config", &cfg_path, "--out", &run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for (split, n) in [("train", 4), ("val", 3), ("test", 4)] {
        let dirs: Vec<_> = fs::read_dir(run.join("scenarios").join(split)).unwrap().collect();
        assert_eq!(dirs.len(), n);
        for d in dirs {
            let meta: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(d.unwrap().path().join("meta.json")).unwrap()).unwrap();
            assert_eq!(meta["steps"], 20);
            assert_eq!(meta["config_hash"], cfg.hash());
        }
    }

    // Fusion needs the per-camera checkpoints first.
    let o = mcfuse(&["train", "--stage", "fusion", "--out", &run_s]);
    assert!(!o.status.success());
    let err = error_line(&o);
    assert_eq!(err["error"], "prerequisite");
    let msg = err["message"].as_str().unwrap();
    for cam in cfg.rig().names() {
        assert!(msg.contains(&format!("mdn_{cam}.ckpt")), "{msg}");
    }

    let o = mcfuse(&["train", "--out", &run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(run.join("models").join("fusion_log.csv")).unwrap();
    let rows = log.lines().skip(1).filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, cfg.fusion.train.epochs);

    let o = mcfuse(&["eval", "--methods", "per-camera,fusion", "--out", &run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    let report = MetricsReport::parse_csv(&text).unwrap();
    let methods: std::collections::BTreeSet<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods.len(), cfg.rig().len() + 1);
    assert!(methods.contains("FUSION"));
    assert!(report.rows.iter().all(|r| r.stats.is_some()));

    let scen = fs::read_dir(run.join("trajectories")).unwrap().next().unwrap().unwrap().path();
    let gt = fs::read_dir(run.join("scenarios/test"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name() == scen.file_name())
        .unwrap()
        .join("ground_truth.txt");
    let svg = dir.path().join("plot.svg");
    let o = mcfuse(&[
        "plot",
        gt.to_str().unwrap(),
        scen.join("FUSION.txt").to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&svg).unwrap().contains("FUSION"));

    let m = run.join("metrics.csv");
    let o = mcfuse(&["compare", m.to_str().unwrap(), m.to_str().unwrap()]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    for line in out.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for d in &cells[2..6] {
            assert_eq!(d.parse::<f64>().unwrap(), 0.0, "{line}");
        }
        assert_eq!(cells[6], "A=B");
    }
}

#[test]
fn noise_free_raw_estimates_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run_s = run.display().to_string();
    let mut cfg = small_config();
    for cc in cfg.conditions.values_mut() {
        cc.outlier_rate = 0.0;
        for m in cc.multipliers.values_mut() {
            *m = 1e-9;
        }
    }
    let cfg_path = write_config(dir.path(), &cfg);
    assert!(mcfuse(&["simulate", "--config", &cfg_path, "--out", &run_s]).status.success());
    let o = mcfuse(&["eval", "--methods", "raw", "--out", &run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = MetricsReport::parse_csv(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
    assert!(!report.rows.is_empty());
    for row in &report.rows {
        let s = row.stats.unwrap();
        assert!(s.rmse < 1e-6 && s.max < 1e-6, "{} {}: {s:?}", row.method, row.condition);
    }
}

#[test]
fn malformed_trajectory_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..16 {
        text.push_str(&format!("{i} {i} 0 0 0 0 0 1\n"));
    }
    text.push_str("16 16 0 oops 0 0 0 1\n");
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, text).unwrap();
    let o = mcfuse(&["plot", bad.to_str().unwrap(), "--out", dir.path().join("p.svg").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = error_line(&o);
    assert_eq!(err["error"], "parse");
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("bad.txt") && msg.contains("17"), "{msg}");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = mcfuse(&["train", "--stage", "everything", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert_eq!(error_line(&o)["error"], "config");
    let o = mcfuse(&["eval", "--out", dir.path().join("nothing").to_str().unwrap()]);
    assert!(!o.status.success());
    assert_eq!(error_line(&o)["error"], "prerequisite");
}
