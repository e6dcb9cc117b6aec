use std::fmt::Write as _;

use mcfuse::geometry::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;
const LEGEND_ROW: f64 = 18.0;
const PALETTE: [&str; 8] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Top-down (x, y) overlay of estimated paths on the ground truth.
///
/// Ground truth is drawn dashed black; each path is a `<polyline>` whose
/// `data-points` attribute holds its pose count.
pub fn render_svg(title: &str, ground_truth: &Trajectory, estimates: &[(String, Trajectory)]) -> String {
    let all = std::iter::once(ground_truth).chain(estimates.iter().map(|(_, t)| t));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for t in all {
        for p in t.positions() {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (WIDTH - 2.0 * MARGIN) / span;
    let map = |x: f64, y: f64| (MARGIN + (x - x0) * scale, HEIGHT - MARGIN - (y - y0) * scale);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title)).unwrap();
    let mut path = |label: &str, t: &Trajectory, style: &str| {
        let pts: Vec<String> = t
            .positions()
            .iter()
            .map(|p| {
                let (u, v) = map(p.x, p.y);
                format!("{u:.3},{v:.3}")
            })
            .collect();
        writeln!(
            out,
            r#"<polyline class="path" data-label="{}" data-points="{}" fill="none" {style} points="{}"/>"#,
            escape(label),
            pts.len(),
            pts.join(" ")
        )
        .unwrap();
    };
    path("ground truth", ground_truth, r#"stroke="black" stroke-width="2" stroke-dasharray="6 4""#);
    for (i, (label, t)) in estimates.iter().enumerate() {
        path(label, t, &format!(r#"stroke="{}" stroke-width="1.5""#, PALETTE[i % PALETTE.len()]));
    }
    let legend: Vec<(&str, &str)> = std::iter::once(("ground truth", "black"))
        .chain(estimates.iter().enumerate().map(|(i, (l, _))| (l.as_str(), PALETTE[i % PALETTE.len()])))
        .collect();
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = MARGIN + 10.0 + LEGEND_ROW * i as f64;
        writeln!(
            out,
            r#"<g class="legend"><line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{c}" y="{ty}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            escape(label),
            a = WIDTH - 170.0,
            b = WIDTH - 150.0,
            c = WIDTH - 144.0,
            ty = y + 4.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
