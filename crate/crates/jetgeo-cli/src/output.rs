//! Artifact writers. Every format is deterministic: fixed 17-significant-
//! digit floats, ',' separators, LF endings, no timestamps.

use jetgeo::dynamics::Trajectory;
use jetgeo::GeometryReport;
use serde_json::json;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub fn fmt_sig(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    use anyhow::Context;
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// CSV with header t,x1..xn,v1..vn,a1..an and a trailing comment row
/// carrying the worst Euler-Lagrange residual along the trajectory.
pub fn write_trajectory_csv(
    path: &Path,
    traj: Option<&Trajectory>,
    dim: usize,
    max_el_residual: Option<f64>,
) -> anyhow::Result<()> {
    let n = traj.map_or(dim, |t| t.dim());
    let mut out = String::from("t");
    for prefix in ["x", "v", "a"] {
        for i in 1..=n {
            write!(out, ",{prefix}{i}").unwrap();
        }
    }
    out.push('\n');

    if let Some(traj) = traj {
        for j in 0..traj.len() {
            out.push_str(&fmt_sig(traj.time(j)));
            let rows = [
                traj.state(j),
                traj.velocity(j),
                traj.acceleration(j).unwrap_or(&[]),
            ];
            for row in rows {
                for value in row {
                    out.push(',');
                    out.push_str(&fmt_sig(*value));
                }
            }
            out.push('\n');
        }
    }
    if let Some(residual) = max_el_residual {
        writeln!(out, "# max_el_residual={}", fmt_sig(residual)).unwrap();
    }
    write_file(path, &out)
}

/// Level-contour segments, one per row: x1a,x2a,x1b,x2b.
pub fn write_segments_csv(path: &Path, segments: &[[[f64; 2]; 2]]) -> anyhow::Result<()> {
    let mut out = String::from("x1a,x2a,x1b,x2b\n");
    for seg in segments {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_sig(seg[0][0]),
            fmt_sig(seg[0][1]),
            fmt_sig(seg[1][0]),
            fmt_sig(seg[1][1])
        )
        .unwrap();
    }
    write_file(path, &out)
}

const SVG_SIZE: f64 = 720.0;
const SVG_MARGIN: f64 = 60.0;

/// SVG 1.1 document: axis frame with variable names and bound labels, plus
/// the contour as polylines (shared endpoints chained into paths).
pub fn write_contour_svg(
    path: &Path,
    bounds: &[[f64; 2]],
    var_names: &[String],
    segments: &[[[f64; 2]; 2]],
    level: f64,
) -> anyhow::Result<()> {
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let to_screen = |p: &[f64; 2]| -> (f64, f64) {
        let tx = (p[0] - bounds[0][0]) / (bounds[0][1] - bounds[0][0]);
        let ty = (p[1] - bounds[1][0]) / (bounds[1][1] - bounds[1][0]);
        (SVG_MARGIN + tx * span, SVG_SIZE - SVG_MARGIN - ty * span)
    };

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">"
    )
    .unwrap();
    writeln!(out, "<!-- constant-energy contour, level = {level} -->").unwrap();
    writeln!(
        out,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{span}\" height=\"{span}\" \
         fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
        m = SVG_MARGIN
    )
    .unwrap();

    let center = SVG_SIZE / 2.0;
    let bottom = SVG_SIZE - SVG_MARGIN;
    writeln!(
        out,
        "<text x=\"{center}\" y=\"{y}\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        var_names[0],
        y = bottom + 40.0
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"20\" y=\"{center}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 20 {center})\">{}</text>",
        var_names[1]
    )
    .unwrap();
    for (value, x, anchor) in [
        (bounds[0][0], SVG_MARGIN, "middle"),
        (bounds[0][1], bottom, "middle"),
    ] {
        writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-size=\"12\">{value}</text>",
            y = bottom + 20.0
        )
        .unwrap();
    }
    for (value, y) in [(bounds[1][0], bottom), (bounds[1][1], SVG_MARGIN)] {
        writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\" font-size=\"12\">{value}</text>",
            x = SVG_MARGIN - 8.0
        )
        .unwrap();
    }

    for chain in chain_segments(segments) {
        out.push_str("<polyline fill=\"none\" stroke=\"#1f6feb\" stroke-width=\"1.5\" points=\"");
        for (i, p) in chain.iter().enumerate() {
            let (sx, sy) = to_screen(p);
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{sx:.2},{sy:.2}").unwrap();
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</svg>\n");
    write_file(path, &out)
}

/// Join segments that share exact endpoints into polylines. Extraction
/// interpolates shared cell edges bitwise-identically, so equality keys
/// are reliable here.
fn chain_segments(segments: &[[[f64; 2]; 2]]) -> Vec<Vec<[f64; 2]>> {
    let key = |p: &[f64; 2]| [p[0].to_bits(), p[1].to_bits()];
    let mut incident: HashMap<[u64; 2], Vec<(usize, usize)>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        incident.entry(key(&seg[0])).or_default().push((s, 0));
        incident.entry(key(&seg[1])).or_default().push((s, 1));
    }

    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut chain = vec![segments[start][0], segments[start][1]];
        loop {
            let tail = key(chain.last().unwrap());
            match incident[&tail].iter().find(|(s, _)| !used[*s]) {
                Some(&(s, end)) => {
                    used[s] = true;
                    chain.push(segments[s][1 - end]);
                }
                None => break,
            }
        }
        loop {
            let head = key(&chain[0]);
            match incident[&head].iter().find(|(s, _)| !used[*s]) {
                Some(&(s, end)) => {
                    used[s] = true;
                    chain.insert(0, segments[s][1 - end]);
                }
                None => break,
            }
        }
        chains.push(chain);
    }
    chains
}

/// Wavefront OBJ mesh, v/f records only, vertices welded on exact equality.
pub fn write_mesh_obj(path: &Path, triangles: &[[[f64; 3]; 3]], level: f64) -> anyhow::Result<()> {
    let (vertices, faces) = jetgeo::levelset::weld_triangles(triangles);
    let mut out = String::new();
    writeln!(out, "# constant-energy surface, level = {level}").unwrap();
    writeln!(out, "# {} vertices, {} faces", vertices.len(), faces.len()).unwrap();
    for v in &vertices {
        writeln!(out, "v {} {} {}", fmt_sig(v[0]), fmt_sig(v[1]), fmt_sig(v[2])).unwrap();
    }
    for f in &faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    write_file(path, &out)
}

pub fn analyze_text(model_name: &str, var_names: &[String], report: &GeometryReport) -> String {
    let mut out = String::new();
    writeln!(out, "model: {model_name}").unwrap();
    writeln!(out, "variables: {}", var_names.join(", ")).unwrap();
    let point: Vec<String> = report.point.iter().map(|v| fmt_sig(*v)).collect();
    writeln!(out, "point: {}", point.join(", ")).unwrap();
    writeln!(out, "yang_mills_energy: {}", fmt_sig(report.yang_mills)).unwrap();
    writeln!(
        out,
        "maxwell_residual_max: {}",
        fmt_sig(report.maxwell_residual_max)
    )
    .unwrap();

    for (label, matrix) in [
        ("jacobian", &report.jacobian),
        ("nonlinear_connection", &report.connection),
        ("em_form", &report.em_form),
    ] {
        writeln!(out, "{label}:").unwrap();
        for line in matrix.to_string().lines() {
            writeln!(out, "  {line}").unwrap();
        }
    }
    writeln!(out, "torsion[i][j][k], k the derivative direction:").unwrap();
    for (k, name) in var_names.iter().enumerate() {
        writeln!(out, "  slice k = {k} (d/d{name}):").unwrap();
        for line in report.torsion.slice_k(k).to_string().lines() {
            writeln!(out, "    {line}").unwrap();
        }
    }
    writeln!(out, "cartan_connection: vanishes identically").unwrap();
    writeln!(out, "curvature: vanishes identically").unwrap();
    out
}

pub fn analyze_json(
    model_name: &str,
    var_names: &[String],
    report: &GeometryReport,
) -> serde_json::Value {
    json!({
        "model": model_name,
        "variables": var_names,
        "point": report.point,
        "jacobian": report.jacobian.to_rows(),
        "nonlinear_connection": report.connection.to_rows(),
        "em_form": report.em_form.to_rows(),
        "torsion": report.torsion.to_nested(),
        "yang_mills_energy": report.yang_mills,
        "maxwell_residual_max": report.maxwell_residual_max,
        "cartan_connection": "vanishes identically",
        "curvature": "vanishes identically",
    })
}
