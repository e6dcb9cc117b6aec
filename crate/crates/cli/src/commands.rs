//! File-level commands over a run directory:
//!
//! ```text
//! <out>/config.toml
//! <out>/scenarios/{train,val,test}/<index>_<condition>/
//! <out>/models/mdn_<CAMERA>.ckpt, mdn_<CAMERA>_log.csv
//! <out>/models/fusion.ckpt, fusion_log.csv, ekf.json
//! <out>/metrics.csv
//! <out>/trajectories/<scenario>/<METHOD>.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use mcfuse::baselines::ProcessModel;
use mcfuse::fusion::FusionNet;
use mcfuse::geometry::tum::{read_trajectory, write_trajectory, TrajectoryFileError};
use mcfuse::geometry::Trajectory;
use mcfuse::mdn::CameraMdn;
use mcfuse::neuralcore::{format_training_log, load_checkpoint, save_checkpoint, EpochRecord};
use mcfuse::simulator::{read_scenario, write_scenario, SimScenario};
use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::metrics::{compare_reports, MethodKind, MetricsReport};
use crate::pipeline::{self, generate_split, scenario_name, Models, Split};
use crate::plot::render_svg;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Mdn,
    Fusion,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Vec<Stage>, CliError> {
        match s {
            "mdn" => Ok(vec![Stage::Mdn]),
            "fusion" => Ok(vec![Stage::Fusion]),
            "all" => Ok(vec![Stage::Mdn, Stage::Fusion]),
            other => Err(CliError::Config(format!("unknown stage {other:?}; expected mdn, fusion or all"))),
        }
    }
}

/// Config precedence: explicit file, then the run directory's saved config,
/// then defaults. `seed` overrides whichever was chosen.
pub fn resolve_config(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let saved = out.join("config.toml");
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None if saved.exists() => ExperimentConfig::load(&saved)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn mdn_checkpoint_path(out: &Path, camera: &str) -> PathBuf {
    models_dir(out).join(format!("mdn_{camera}.ckpt"))
}

pub fn fusion_checkpoint_path(out: &Path) -> PathBuf {
    models_dir(out).join("fusion.ckpt")
}

pub fn ekf_path(out: &Path) -> PathBuf {
    models_dir(out).join("ekf.json")
}

pub fn metrics_path(out: &Path) -> PathBuf {
    out.join("metrics.csv")
}

fn log_text(records: &[EpochRecord], hash: &str) -> String {
    format!("{}# config_hash {hash}\n", format_training_log(records))
}

/// Writes every split's scenarios and the resolved config. Returns scenario directories.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let hash = cfg.hash();
    write_file(&out.join("config.toml"), &format!("# config_hash {hash}\n{}", cfg.to_toml()))?;
    let rig = cfg.rig();
    let mut dirs = Vec::new();
    for split in Split::ALL {
        for (i, s) in generate_split(cfg, split)?.iter().enumerate() {
            let dir = out.join("scenarios").join(split.as_str()).join(scenario_name(i, s.condition.label));
            write_scenario(&dir, s, &rig, &hash).map_err(|e| CliError::io(&dir, e))?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

/// Reads one split back, checking it was produced by this config.
pub fn load_split(cfg: &ExperimentConfig, out: &Path, split: Split) -> Result<(Vec<String>, Vec<SimScenario>), CliError> {
    let root = out.join("scenarios").join(split.as_str());
    let expected = split.counts(cfg).total();
    if expected == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if !root.is_dir() {
        return Err(CliError::Prerequisite(vec![root.display().to_string()]));
    }
    let mut names: Vec<String> = fs::read_dir(&root)
        .map_err(|e| CliError::io(&root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let hash = cfg.hash();
    let mut scenarios = Vec::with_capacity(names.len());
    for n in &names {
        let dir = root.join(n);
        let (s, meta) = read_scenario(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        if meta.config_hash != hash {
            return Err(CliError::Data(format!(
                "{} was simulated with config {} but the current config is {hash}; rerun simulate",
                dir.display(),
                meta.config_hash
            )));
        }
        scenarios.push(s);
    }
    if scenarios.len() != expected {
        return Err(CliError::Data(format!(
            "{} holds {} scenarios, config expects {expected}",
            root.display(),
            scenarios.len()
        )));
    }
    Ok((names, scenarios))
}

fn load_heads(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CameraMdn>, CliError> {
    let rig = cfg.rig();
    let paths: Vec<PathBuf> = rig.cameras.iter().map(|c| mdn_checkpoint_path(out, &c.name)).collect();
    let missing: Vec<String> = paths.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Prerequisite(missing));
    }
    paths
        .iter()
        .map(|p| {
            let ckpt = load_checkpoint(p).map_err(|e| CliError::io(p, e))?;
            CameraMdn::from_checkpoint(&ckpt).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EkfFile {
    config_hash: String,
    /// Row-major 6 × 6 process noise.
    q: Vec<f64>,
}

fn load_ekf(out: &Path) -> Result<ProcessModel, CliError> {
    let path = ekf_path(out);
    if !path.is_file() {
        return Err(CliError::Prerequisite(vec![path.display().to_string()]));
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let f: EkfFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if f.q.len() != 36 {
        return Err(CliError::Data(format!("{}: expected 36 entries", path.display())));
    }
    ProcessModel::new(Matrix6::from_row_slice(&f.q)).map_err(|e| CliError::Data(e.to_string()))
}

fn load_fusion(out: &Path) -> Result<FusionNet, CliError> {
    let path = fusion_checkpoint_path(out);
    if !path.is_file() {
        return Err(CliError::Prerequisite(vec![path.display().to_string()]));
    }
    let ckpt = load_checkpoint(&path).map_err(|e| CliError::io(&path, e))?;
    FusionNet::from_checkpoint(&ckpt).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Runs the requested training stages; returns the files written.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, stages: &[Stage]) -> Result<Vec<PathBuf>, CliError> {
    let hash = cfg.hash();
    let mut written = Vec::new();
    let (_, train) = load_split(cfg, out, Split::Train)?;
    let (_, val) = load_split(cfg, out, Split::Val)?;
    for stage in stages {
        match stage {
            Stage::Mdn => {
                for (head, log) in pipeline::train_heads(cfg, &train, &val)? {
                    let ckpt = mdn_checkpoint_path(out, &head.camera);
                    fs::create_dir_all(models_dir(out)).map_err(|e| CliError::io(&models_dir(out), e))?;
                    save_checkpoint(&ckpt, &head.to_checkpoint()).map_err(|e| CliError::io(&ckpt, e))?;
                    let log_path = models_dir(out).join(format!("mdn_{}_log.csv", head.camera));
                    write_file(&log_path, &log_text(&log, &hash))?;
                    written.extend([ckpt, log_path]);
                }
            }
            Stage::Fusion => {
                let heads = load_heads(cfg, out)?;
                let train_mix = pipeline::all_mixtures(&heads, &train)?;
                let val_mix = pipeline::all_mixtures(&heads, &val)?;
                let (net, log) = pipeline::train_fusion_stage(cfg, &train_mix, &train, &val_mix, &val)?;
                let ckpt = fusion_checkpoint_path(out);
                save_checkpoint(&ckpt, &net.to_checkpoint()).map_err(|e| CliError::io(&ckpt, e))?;
                let log_path = models_dir(out).join("fusion_log.csv");
                write_file(&log_path, &log_text(&log, &hash))?;
                let q = pipeline::tune_ekf(cfg, &val_mix, &val)?;
                let ekf = EkfFile {
                    config_hash: hash.clone(),
                    q: q.q.transpose().iter().copied().collect(),
                };
                let ekf_file = ekf_path(out);
                write_file(&ekf_file, &(serde_json::to_string_pretty(&ekf).expect("serializes") + "\n"))?;
                written.extend([ckpt, log_path, ekf_file]);
            }
        }
    }
    Ok(written)
}

/// Evaluates `methods` on the test split and writes the metrics table and
/// every estimated trajectory.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, methods: &[MethodKind]) -> Result<MetricsReport, CliError> {
    let hash = cfg.hash();
    let (names, test) = load_split(cfg, out, Split::Test)?;
    let needs_heads = methods.iter().any(|m| !matches!(m, MethodKind::Raw(_)));
    let heads = if needs_heads { load_heads(cfg, out)? } else { Vec::new() };
    let fusion = if methods.contains(&MethodKind::Fusion) { Some(load_fusion(out)?) } else { None };
    let ekf = if methods.contains(&MethodKind::Ekf) { Some(load_ekf(out)?) } else { None };
    let test_mix = if needs_heads {
        pipeline::all_mixtures(&heads, &test)?
    } else {
        vec![Vec::new(); test.len()]
    };
    let models = Models {
        heads: &heads,
        fusion: fusion.as_ref(),
        ekf: ekf.as_ref(),
        prior: pipeline::ekf_prior(cfg),
    };
    let eval = pipeline::evaluate(cfg, &models, methods, &test, &test_mix)?;
    write_file(&metrics_path(out), &eval.report.to_csv())?;
    let header = format!("config_hash {hash}");
    for (si, label, traj) in &eval.trajectories {
        let path = out.join("trajectories").join(&names[*si]).join(format!("{label}.txt"));
        fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| CliError::io(&path, e))?;
        write_trajectory(&path, traj, &[&header]).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(eval.report)
}

fn read_traj(path: &Path) -> Result<Trajectory, CliError> {
    read_trajectory(path).map_err(|e| match e {
        TrajectoryFileError::Parse { line, message } => CliError::Parse {
            file: path.display().to_string(),
            line,
            message,
        },
        other => CliError::io(path, other),
    })
}

/// Renders the ground truth (first file) with every estimate into one SVG.
pub fn cmd_plot(files: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let (gt_path, rest) = files
        .split_first()
        .ok_or_else(|| CliError::Config("plot needs a ground-truth file".into()))?;
    let gt = read_traj(gt_path)?;
    let estimates = rest
        .iter()
        .map(|p| {
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((label, read_traj(p)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let title = gt_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_file(out, &render_svg(&title, &gt, &estimates))
}

pub fn read_report(path: &Path) -> Result<MetricsReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    MetricsReport::parse_csv(&text).map_err(|e| match e {
        CliError::Parse { line, message, .. } => CliError::Parse {
            file: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

pub fn cmd_compare(a: &Path, b: &Path) -> Result<String, CliError> {
    compare_reports(&read_report(a)?, &read_report(b)?)
}
