use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{CameraRig, ConditionProfile, FeatureSequence, SimError, SimScenario};
use crate::geometry::tum::{format_trajectory, parse_trajectory};
use crate::geometry::RelativePose6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub config_hash: String,
    pub seed: u64,
    pub steps: usize,
    pub rig: CameraRig,
    pub condition: ConditionProfile,
}

fn csv_rows<'a>(rows: impl Iterator<Item = Vec<f64>> + 'a, header: &str, config_hash: &str) -> String {
    let mut out = String::new();
    writeln!(out, "# config_hash {config_hash}").unwrap();
    writeln!(out, "{header}").unwrap();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

/// Writes `ground_truth.txt`, `features_<camera>.csv`, `latent_<camera>.csv`
/// and `meta.json` into `dir`. Output is a pure function of the inputs.
pub fn write_scenario(
    dir: &Path,
    scenario: &SimScenario,
    rig: &CameraRig,
    config_hash: &str,
) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    let header = format!("config_hash {config_hash}");
    fs::write(
        dir.join("ground_truth.txt"),
        format_trajectory(&scenario.trajectory, &[header.as_str(), "timestamp tx ty tz qx qy qz qw"]),
    )?;
    for seq in &scenario.sequences {
        let d = seq.features.ncols();
        let head: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
        let text = csv_rows(
            seq.features.rows().into_iter().map(|r| r.to_vec()),
            &head.join(","),
            config_hash,
        );
        fs::write(dir.join(format!("features_{}.csv", seq.camera)), text)?;
        let text = csv_rows(
            seq.latent_truth.iter().map(|y| y.to_array().to_vec()),
            "tx,ty,tz,roll,pitch,yaw",
            config_hash,
        );
        fs::write(dir.join(format!("latent_{}.csv", seq.camera)), text)?;
    }
    let meta = ScenarioMeta {
        config_hash: config_hash.to_string(),
        seed: scenario.seed,
        steps: scenario.steps(),
        rig: rig.clone(),
        condition: scenario.condition.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|source| SimError::Json {
        file: "meta.json".into(),
        source,
    })?;
    fs::write(dir.join("meta.json"), json + "\n")?;
    Ok(())
}

fn read_csv(path: &Path, width: Option<usize>) -> Result<Array2<f64>, SimError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = width;
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let parse_err = |message: String| SimError::Parse {
            file: file.clone(),
            line: i + 1,
            message,
        };
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| parse_err(format!("{c:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        match cols {
            None => cols = Some(cells.len()),
            Some(c) if c != cells.len() => {
                return Err(parse_err(format!("expected {c} columns, found {}", cells.len())))
            }
            _ => {}
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        data.extend(cells);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

/// Reads a directory written by [`write_scenario`].
pub fn read_scenario(dir: &Path) -> Result<(SimScenario, ScenarioMeta), SimError> {
    let meta_path = dir.join("meta.json");
    let meta: ScenarioMeta =
        serde_json::from_str(&fs::read_to_string(&meta_path)?).map_err(|source| SimError::Json {
            file: meta_path.display().to_string(),
            source,
        })?;
    meta.rig.validate()?;
    meta.condition.validate(&meta.rig)?;
    let gt_path = dir.join("ground_truth.txt");
    let trajectory =
        parse_trajectory(&fs::read_to_string(&gt_path)?).map_err(|source| SimError::Trajectory {
            file: gt_path.display().to_string(),
            source,
        })?;
    if trajectory.len() != meta.steps + 1 {
        return Err(SimError::Config(format!(
            "{} has {} poses, meta.json expects {}",
            gt_path.display(),
            trajectory.len(),
            meta.steps + 1
        )));
    }
    let mut sequences = Vec::with_capacity(meta.rig.len());
    for cam in &meta.rig.cameras {
        let fpath = dir.join(format!("features_{}.csv", cam.name));
        let features = read_csv(&fpath, Some(meta.rig.feature_dim))?;
        let lpath = dir.join(format!("latent_{}.csv", cam.name));
        let latent = read_csv(&lpath, Some(6))?;
        for (path, n) in [(&fpath, features.nrows()), (&lpath, latent.nrows())] {
            if n != meta.steps {
                return Err(SimError::Config(format!(
                    "{} has {n} rows, expected {}",
                    path.display(),
                    meta.steps
                )));
            }
        }
        let latent_truth = latent
            .rows()
            .into_iter()
            .map(|r| RelativePose6 {
                rho: Vector3::new(r[0], r[1], r[2]),
                phi: Vector3::new(r[3], r[4], r[5]),
            })
            .collect();
        sequences.push(FeatureSequence {
            camera: cam.name.clone(),
            features,
            latent_truth,
        });
    }
    Ok((
        SimScenario {
            trajectory,
            sequences,
            condition: meta.condition.clone(),
            seed: meta.seed,
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{default_conditions, generate_trajectory, observe};

    fn scenario(seed: u64) -> (SimScenario, CameraRig) {
        let rig = CameraRig::default_six(8, 2);
        let [_, _, night] = default_conditions();
        let traj = generate_trajectory(40, 0.1, seed).unwrap();
        (observe(&traj, &rig, &night, seed).unwrap(), rig)
    }

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    }

    #[test]
    fn round_trip_preserves_values() {
        let (sc, rig) = scenario(3);
        let tmp = tempfile::tempdir().unwrap();
        write_scenario(tmp.path(), &sc, &rig, "abc123").unwrap();
        let (back, meta) = read_scenario(tmp.path()).unwrap();
        assert_eq!(meta.config_hash, "abc123");
        assert_eq!(meta.rig, rig);
        assert_eq!(back.sequences, sc.sequences);
        assert_eq!(back.condition, sc.condition);
        for (a, b) in back.trajectory.poses().iter().zip(sc.trajectory.poses()) {
            assert!((a.translation - b.translation).norm() < 1e-12);
            assert!((a.rotation - b.rotation).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (sc, rig) = scenario(5);
        write_scenario(a.path(), &sc, &rig, "h").unwrap();
        let (sc, rig) = scenario(5);
        write_scenario(b.path(), &sc, &rig, "h").unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
        assert!(a.path().join("features_FRONT_LEFT.csv").exists());
    }

    #[test]
    fn malformed_feature_file_reports_line() {
        let (sc, rig) = scenario(5);
        let tmp = tempfile::tempdir().unwrap();
        write_scenario(tmp.path(), &sc, &rig, "h").unwrap();
        let path = tmp.path().join("features_BACK.csv");
        let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        lines[4] = "1,2,x,4,5,6,7,8".into();
        fs::write(&path, lines.join("\n")).unwrap();
        match read_scenario(tmp.path()) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
