//! CSV, JSON and SVG emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use glideflow::edi::EdiReport;
use glideflow::glide::GlideSystem;
use glideflow::inclusion::Trajectory;
use glideflow::mms::MmsRun;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::study::ConvergenceReport;

pub const TOOL: &str = "glideflow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let wrap = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn coord_header(dim: usize) -> impl Iterator<Item = String> {
    (0..dim).map(|k| format!("x{k}"))
}

/// One row per particle per scheme state.
pub fn write_mms_csv(path: &Path, run: &MmsRun) -> Result<()> {
    let dim = run.initial().dim();
    let mut header = vec!["step".to_string(), "t".into(), "particle".into()];
    header.extend(coord_header(dim));
    header.extend(["direction", "amplitude", "phi", "energy"].map(String::from));
    let mut rows = Vec::new();
    for (k, z) in run.states.iter().enumerate() {
        let rec = k.checked_sub(1).map(|j| &run.steps[j]);
        for (i, p) in z.positions().iter().enumerate() {
            let mut row = vec![k.to_string(), run.time(k).to_string(), i.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            match rec {
                Some(r) => row.extend([
                    r.directions[i].to_string(),
                    r.amplitudes[i].to_string(),
                    r.phi_value.to_string(),
                    r.energy_after.to_string(),
                ]),
                None => row.extend([String::new(), String::new(), String::new(), String::new()]),
            }
            rows.push(row);
        }
    }
    write_rows(path, header, rows)
}

/// One row per particle per sample: position, regime, active directions, θ.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let dim = traj.states[0].dim();
    let mut header = vec!["t".to_string(), "particle".into()];
    header.extend(coord_header(dim));
    header.extend(["regime", "active", "theta"].map(String::from));
    let mut rows = Vec::new();
    for (k, (t, z)) in traj.times.iter().zip(&traj.states).enumerate() {
        for (i, p) in z.positions().iter().enumerate() {
            let mut row = vec![t.to_string(), i.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            match traj.regimes.get(k).and_then(|r| r.get(i)) {
                Some(r) => row.extend([
                    r.kind.as_str().to_string(),
                    r.active.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";"),
                    r.theta.to_string(),
                ]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            rows.push(row);
        }
    }
    write_rows(path, header, rows)
}

pub fn write_convergence_csv(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let header = ["tau", "sup_distance", "observed_order", "edi_residual"].map(String::from).to_vec();
    let rows = report
        .taus
        .iter()
        .enumerate()
        .map(|(k, tau)| {
            vec![
                tau.to_string(),
                report.sup_distances[k].to_string(),
                report.observed_orders.get(k).map(|o| o.to_string()).unwrap_or_default(),
                report.edi_residuals[k].map(|r| r.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(path, header, rows)
}

/// Arbitrary table with a header.
pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_rows(path, header.iter().map(|s| s.to_string()).collect(), rows)
}

/// JSON envelope shared by all reports.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: &'a str,
    pub report: T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, config_hash: &str, report: T) -> Result<()> {
    let env = Envelope {
        tool: TOOL,
        version: VERSION,
        command,
        config_hash,
        report,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Serialisable view of an [`EdiReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdiJson {
    pub tau: f64,
    pub kinetic_term: f64,
    pub interpolant_term: f64,
    pub energy_drop: f64,
    pub residual: f64,
    pub continuum_residual: f64,
    pub quadrature_nodes: usize,
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    pub inequality_only: bool,
    pub passed: bool,
}

impl EdiJson {
    pub fn new(tau: f64, rep: &EdiReport, relative: f64) -> Self {
        Self {
            tau,
            kinetic_term: rep.kinetic_term,
            interpolant_term: rep.interpolant_term,
            energy_drop: rep.energy_drop,
            residual: rep.residual,
            continuum_residual: rep.continuum_residual,
            quadrature_nodes: rep.quadrature_nodes,
            relative_tolerance: relative,
            absolute_tolerance: rep.tolerance(relative),
            inequality_only: rep.inequality_only,
            passed: rep.passes(relative),
        }
    }
}

/// A planar polyline with one colour per segment.
#[derive(Debug, Clone)]
pub struct SvgPath {
    pub points: Vec<(f64, f64)>,
    pub colors: Vec<&'static str>,
    pub label: String,
}

impl SvgPath {
    pub fn uniform(points: Vec<(f64, f64)>, color: &'static str, label: impl Into<String>) -> Self {
        let n = points.len().saturating_sub(1);
        Self {
            points,
            colors: vec![color; n],
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SvgScene {
    pub title: String,
    pub paths: Vec<SvgPath>,
    /// Glide directions drawn as a faint star at `grid_center`.
    pub glide: Vec<(f64, f64)>,
    pub grid_center: (f64, f64),
    pub ambiguity: Vec<Vec<(f64, f64)>>,
    pub annotations: Vec<String>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn regime_color(kind: glideflow::inclusion::RegimeKind) -> &'static str {
    use glideflow::inclusion::RegimeKind as R;
    match kind {
        R::Rest => "#7f7f7f",
        R::Single => "#1f77b4",
        R::Sliding => "#d62728",
        R::Crossing => "#2ca02c",
        R::SourceBranch => "#ff7f0e",
    }
}

/// Renders the scene to a standalone SVG document.
pub fn render_svg(scene: &SvgScene) -> String {
    let (w, h, pad) = (640.0, 640.0, 40.0);
    let mut pts: Vec<(f64, f64)> = scene.paths.iter().flat_map(|p| p.points.iter().copied()).collect();
    pts.extend(scene.ambiguity.iter().flatten().copied());
    pts.push(scene.grid_center);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9) * 1.1;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let scale = (w - 2.0 * pad) / span;
    let map = |(x, y): (f64, f64)| (w / 2.0 + (x - cx) * scale, h / 2.0 - (y - cy) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(&scene.title));

    let reach = span;
    for (gx, gy) in &scene.glide {
        let a = map(scene.grid_center);
        let b = map((scene.grid_center.0 + gx * reach, scene.grid_center.1 + gy * reach));
        let _ = writeln!(
            s,
            r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#cccccc" stroke-width="1"/>"##,
            a.0, a.1, b.0, b.1
        );
    }
    for line in &scene.ambiguity {
        let d: Vec<String> = line.iter().map(|p| map(*p)).map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
            d.join(" ")
        );
    }
    for path in &scene.paths {
        for (k, seg) in path.points.windows(2).enumerate() {
            let (a, b) = (map(seg[0]), map(seg[1]));
            let _ = writeln!(
                s,
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}" stroke-width="1.5"/>"#,
                a.0, a.1, b.0, b.1, path.colors.get(k).copied().unwrap_or("#000000")
            );
        }
        if let Some(first) = path.points.first() {
            let (x, y) = map(*first);
            let _ = writeln!(s, r##"<circle cx="{x:.3}" cy="{y:.3}" r="3" fill="#000000"/>"##);
        }
    }
    for (k, text) in scene
        .paths
        .iter()
        .map(|p| p.label.as_str())
        .filter(|l| !l.is_empty())
        .chain(scene.annotations.iter().map(String::as_str))
        .enumerate()
    {
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            h - pad + 12.0 - 13.0 * k as f64,
            escape(text)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, scene: &SvgScene) -> Result<()> {
    fs::write(path, render_svg(scene)).map_err(|e| HarnessError::io(path, e))
}

/// Directions of a planar glide system as tuples.
pub fn glide_star(sys: &GlideSystem) -> Vec<(f64, f64)> {
    if sys.dim() != 2 {
        return Vec::new();
    }
    sys.directions().iter().map(|g| (g[0], g[1])).collect()
}

/// Tie rays of a quadratic well: from the centre along each bisector.
pub fn well_ambiguity(sys: &GlideSystem, center: (f64, f64), reach: f64) -> Vec<Vec<(f64, f64)>> {
    if sys.dim() != 2 {
        return Vec::new();
    }
    sys.bisectors()
        .iter()
        .map(|b| vec![center, (center.0 + b[0] * reach, center.1 + b[1] * reach)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_and_deterministic() {
        let scene = SvgScene {
            title: "a < b".into(),
            paths: vec![SvgPath::uniform(vec![(0.0, 0.0), (1.0, 1.0)], PALETTE[0], "run")],
            glide: glide_star(&GlideSystem::square()),
            grid_center: (0.0, 0.0),
            ambiguity: well_ambiguity(&GlideSystem::square(), (0.0, 0.0), 1.0),
            annotations: vec!["note".into()],
        };
        let a = render_svg(&scene);
        assert_eq!(a, render_svg(&scene));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("a &lt; b"));
        assert_eq!(a.matches("<polyline").count(), 4);
    }
}
