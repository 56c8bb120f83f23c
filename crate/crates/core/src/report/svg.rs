use std::fmt::Write as _;
use std::path::Path;

use crate::search::{pareto_front, Direction, Objective, ObjectiveSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterAxes {
    pub x: ObjectiveSpec,
    pub y: ObjectiveSpec,
}

impl Default for ScatterAxes {
    fn default() -> Self {
        Self { x: Objective::Params.into(), y: Objective::ValAccuracy.into() }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Self-contained SVG scatter: one circle per point and a polyline through
/// the 2-D Pareto front ordered by x.
pub fn render_scatter(points: &[ScatterPoint], axes: &ScatterAxes) -> String {
    let (x0, x1) = range(points.iter().map(|p| p.x));
    let (y0, y1) = range(points.iter().map(|p| p.y));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(axes.x.objective.name())
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" font-size="14" transform="rotate(-90 15 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(axes.y.objective.name())
    );
    for (v, x) in [(x0, left), (x1, right)] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{v:.4}</text>"#,
            bottom + 15.0
        );
    }
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" font-size="10">{v:.4}</text>"#, left - 5.0);
    }

    let coords: Vec<Vec<f64>> = points.iter().map(|p| vec![p.x, p.y]).collect();
    let dirs: [Direction; 2] = [axes.x.direction, axes.y.direction];
    let mut front = pareto_front(&coords, &dirs);
    front.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));

    for p in points {
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.6"/>"#,
            px(p.x),
            py(p.y)
        );
    }
    if front.len() >= 2 {
        let pts: Vec<String> =
            front.iter().map(|&i| format!("{:.2},{:.2}", px(points[i].x), py(points[i].y))).collect();
        let _ = writeln!(s, r#"<polyline class="front" points="{}" fill="none" stroke="crimson"/>"#, pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_scatter(points: &[ScatterPoint], axes: &ScatterAxes, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, render_scatter(points, axes))
}
