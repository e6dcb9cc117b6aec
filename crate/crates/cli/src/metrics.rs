use std::fmt::Write as _;

use mcfuse::geometry::RpeStats;
use mcfuse::simulator::{CameraRig, Condition};

use crate::CliError;

pub const METRICS_HEADER: &str = "method,condition,rmse,max,mean,std";
/// Condition label of the cells pooled over all conditions.
pub const POOLED: &str = "all";
/// Marker for a cell whose method did not run.
pub const NOT_RUN: &str = "NR";

/// An evaluated estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodKind {
    /// Mixture means of one camera's network.
    Camera(String),
    /// The noisy relative poses the camera's features encode.
    Raw(String),
    Fusion,
    Ekf,
    Ivw,
}

impl MethodKind {
    pub fn label(&self) -> String {
        match self {
            MethodKind::Camera(n) => n.clone(),
            MethodKind::Raw(n) => format!("RAW_{n}"),
            MethodKind::Fusion => "FUSION".into(),
            MethodKind::Ekf => "EKF".into(),
            MethodKind::Ivw => "IVW".into(),
        }
    }

    /// Every method: per-camera rows first, then the fused ones, then raw inputs.
    pub fn all(rig: &CameraRig) -> Vec<MethodKind> {
        Self::select(rig, &["per-camera", "fusion", "ekf", "ivw", "raw"]).expect("known groups")
    }

    /// Expands method groups (`per-camera`, `fusion`, `ekf`, `ivw`, `raw`) in a fixed order.
    pub fn select(rig: &CameraRig, groups: &[&str]) -> Result<Vec<MethodKind>, CliError> {
        const KNOWN: [&str; 5] = ["per-camera", "fusion", "ekf", "ivw", "raw"];
        for g in groups {
            if !KNOWN.contains(g) {
                return Err(CliError::Config(format!(
                    "unknown method {g:?}; expected a subset of {}",
                    KNOWN.join(",")
                )));
            }
        }
        let mut out = Vec::new();
        for g in KNOWN.iter().filter(|k| groups.contains(k)) {
            match *g {
                "per-camera" => out.extend(rig.cameras.iter().map(|c| MethodKind::Camera(c.name.clone()))),
                "fusion" => out.push(MethodKind::Fusion),
                "ekf" => out.push(MethodKind::Ekf),
                "ivw" => out.push(MethodKind::Ivw),
                _ => out.extend(rig.cameras.iter().map(|c| MethodKind::Raw(c.name.clone()))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub condition: String,
    /// `None` marks a cell that was not run.
    pub stats: Option<RpeStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    /// `errors[method][condition]` holds per-step errors, `None` when the method
    /// failed there. Conditions without data (`present` false) are not run, and
    /// the pooled cell runs only if every condition with data ran.
    pub fn from_errors(
        config_hash: String,
        seed: u64,
        methods: &[MethodKind],
        errors: &[Vec<Option<Vec<f64>>>],
        present: &[bool; 3],
    ) -> Self {
        let mut rows = Vec::new();
        for (m, cells) in methods.iter().zip(errors) {
            let mut pooled = Some(Vec::new());
            for ((c, cell), &has) in Condition::ALL.iter().zip(cells).zip(present) {
                if has {
                    match (cell, pooled.as_mut()) {
                        (Some(e), Some(p)) => p.extend_from_slice(e),
                        (None, _) => pooled = None,
                        _ => {}
                    }
                }
                rows.push(MetricsRow {
                    method: m.label(),
                    condition: c.as_str().into(),
                    stats: cell.as_deref().filter(|_| has).and_then(RpeStats::from_errors),
                });
            }
            rows.push(MetricsRow {
                method: m.label(),
                condition: POOLED.into(),
                stats: pooled.as_deref().and_then(RpeStats::from_errors),
            });
        }
        Self { config_hash, seed, rows }
    }

    pub fn get(&self, method: &str, condition: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.condition == condition)
    }

    pub fn rmse(&self, method: &str, condition: &str) -> Option<f64> {
        self.get(method, condition).and_then(|r| r.stats).map(|s| s.rmse)
    }

    /// Header, one row per cell, then a trailing provenance comment.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            match r.stats {
                Some(s) => writeln!(out, "{},{},{},{},{},{}", r.method, r.condition, s.rmse, s.max, s.mean, s.std),
                None => writeln!(out, "{},{},{NOT_RUN},{NOT_RUN},{NOT_RUN},{NOT_RUN}", r.method, r.condition),
            }
            .unwrap();
        }
        writeln!(out, "# config_hash {} seed {}", self.config_hash, self.seed).unwrap();
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: String| CliError::Parse {
            file: "metrics".into(),
            line,
            message,
        };
        match lines.next() {
            Some((_, h)) if h.trim() == METRICS_HEADER => {}
            other => {
                return Err(err(1, format!("expected header {METRICS_HEADER:?}, found {:?}", other.map(|o| o.1))))
            }
        }
        let mut rows = Vec::new();
        let mut config_hash = String::new();
        let mut seed = 0;
        for (i, line) in lines {
            let line_no = i + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let parts: Vec<&str> = meta.split_whitespace().collect();
                if let ["config_hash", h, "seed", s] = parts[..] {
                    config_hash = h.to_string();
                    seed = s.parse().map_err(|e| err(line_no, format!("seed: {e}")))?;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(err(line_no, format!("expected 6 fields, found {}", cells.len())));
            }
            let stats = if cells[2..].iter().all(|c| *c == NOT_RUN) {
                None
            } else {
                let v: Vec<f64> = cells[2..]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|e| err(line_no, format!("{c:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                Some(RpeStats {
                    rmse: v[0],
                    max: v[1],
                    mean: v[2],
                    std: v[3],
                })
            };
            rows.push(MetricsRow {
                method: cells[0].into(),
                condition: cells[1].into(),
                stats,
            });
        }
        Ok(Self { config_hash, seed, rows })
    }
}

/// Per-cell differences `b − a` with an ordering flag on RMSE.
///
/// Both reports must list the same (method, condition) cells in the same order.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> Result<String, CliError> {
    let keys = |r: &MetricsReport| -> Vec<(String, String)> {
        r.rows.iter().map(|x| (x.method.clone(), x.condition.clone())).collect()
    };
    if keys(a) != keys(b) {
        return Err(CliError::Schema("reports list different (method, condition) cells".into()));
    }
    let mut out = String::from("method,condition,delta_rmse,delta_max,delta_mean,delta_std,order\n");
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        match (ra.stats, rb.stats) {
            (Some(x), Some(y)) => {
                let order = if x.rmse < y.rmse {
                    "A<B"
                } else if x.rmse > y.rmse {
                    "A>B"
                } else {
                    "A=B"
                };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{order}",
                    ra.method,
                    ra.condition,
                    y.rmse - x.rmse,
                    y.max - x.max,
                    y.mean - x.mean,
                    y.std - x.std
                )
                .unwrap();
            }
            _ => writeln!(out, "{},{},{NOT_RUN},{NOT_RUN},{NOT_RUN},{NOT_RUN},{NOT_RUN}", ra.method, ra.condition).unwrap(),
        }
    }
    Ok(out)
}
