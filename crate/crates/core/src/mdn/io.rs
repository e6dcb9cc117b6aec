use std::fmt::Write as _;

use super::{MdnError, MixtureParams};

/// One row per step: `camera,t,` then M alphas, 6M means (row-major) and M sigmas.
pub fn format_mixture_csv(camera: &str, params: &[MixtureParams]) -> String {
    let m = params.first().map(|p| p.components()).unwrap_or(0);
    let mut head = vec!["camera".to_string(), "t".to_string()];
    head.extend((0..m).map(|i| format!("alpha{i}")));
    head.extend((0..m).flat_map(|i| (0..6).map(move |k| format!("mu{i}_{k}"))));
    head.extend((0..m).map(|i| format!("sigma{i}")));
    let mut out = head.join(",");
    out.push('\n');
    for (t, p) in params.iter().enumerate() {
        write!(out, "{camera},{t}").unwrap();
        for v in p.to_flat() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses [`format_mixture_csv`] output into `(camera, t, params)` rows.
pub fn parse_mixture_csv(text: &str) -> Result<Vec<(String, usize, MixtureParams)>, MdnError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MdnError::Parse { line: i + 1, message };
        let mut cells = line.split(',');
        let camera = cells.next().unwrap_or_default().to_string();
        let t = cells
            .next()
            .ok_or_else(|| err("missing step".into()))?
            .parse::<usize>()
            .map_err(|e| err(format!("step: {e}")))?;
        let values: Vec<f64> = cells
            .map(|c| c.parse::<f64>().map_err(|e| err(format!("{c:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        let params = MixtureParams::from_flat(&values).map_err(|e| err(e.to_string()))?;
        rows.push((camera, t, params));
    }
    Ok(rows)
}
