//! CSV, JSON and SVG output for sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SweepResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [Self::Csv, Self::Json, Self::Svg];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            _ => Err(Error::InvalidArgument(format!("unknown report format '{s}' (csv|json|svg)"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        }
    }
}

/// Shortest round-trip representation in scientific notation; `inf` for infinity.
fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Columns: `n, L, replicate`, each distance, each bound, each distance's
/// statistical error, and `wall_time` when timing was requested.
pub fn to_csv_string(result: &SweepResult) -> Result<String> {
    let spec = &result.spec;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n".to_string(), "L".to_string(), "replicate".to_string()];
    header.extend(spec.distances.iter().map(|k| k.label().to_string()));
    header.extend(spec.bounds.iter().map(|b| b.label().to_string()));
    header.extend(spec.distances.iter().map(|k| format!("{}_err", k.label())));
    if spec.timing {
        header.push("wall_time".into());
    }
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for row in &result.rows {
        let mut rec = vec![row.n.to_string(), row.depth.to_string(), row.replicate.to_string()];
        rec.extend(spec.distances.iter().map(|k| row.distance(*k).map_or(String::new(), |e| num(e.value))));
        rec.extend(spec.bounds.iter().map(|b| row.bound(*b).map_or(String::new(), |r| num(r.value))));
        rec.extend(spec.distances.iter().map(|k| row.distance(*k).map_or(String::new(), |e| num(e.statistical_error))));
        if spec.timing {
            rec.push(row.wall_time.map_or(String::new(), num));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

const W: f64 = 800.0;
const H: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Series {
    label: String,
    class: &'static str,
    /// `(log10 n, log10 value)`, replicate-averaged in log space.
    line: Vec<(f64, f64)>,
    points: Vec<(f64, f64)>,
}

fn average(points: &[(usize, f64)]) -> Vec<(f64, f64)> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(n, v) in points {
        if v > 0.0 && v.is_finite() {
            by_n.entry(n).or_default().push(v.log10());
        }
    }
    by_n.into_iter().map(|(n, v)| ((n as f64).log10(), v.iter().sum::<f64>() / v.len() as f64)).collect()
}

fn collect_series(result: &SweepResult) -> Vec<Series> {
    let mut out = Vec::new();
    for &k in &result.spec.distances {
        let pts: Vec<(usize, f64)> = result.rows.iter().filter_map(|r| r.distance(k).map(|e| (r.n, e.value))).collect();
        out.push(Series {
            label: k.label().to_string(),
            class: "distance",
            line: average(&pts),
            points: pts
                .iter()
                .filter(|p| p.1 > 0.0 && p.1.is_finite())
                .map(|&(n, v)| ((n as f64).log10(), v.log10()))
                .collect(),
        });
    }
    for &b in &result.spec.bounds {
        let pts: Vec<(usize, f64)> = result.rows.iter().filter_map(|r| r.bound(b).map(|e| (r.n, e.value))).collect();
        out.push(Series { label: b.label().to_string(), class: "bound", line: average(&pts), points: vec![] });
    }
    out
}

/// Log-log plot: one polyline per distance and per bound, empirical points as
/// circles. Infinite bounds leave an empty polyline.
pub fn to_svg_string(result: &SweepResult) -> String {
    let series = collect_series(result);
    let xs: Vec<f64> = result.spec.width_grid.iter().map(|&n| (n as f64).log10()).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.line.iter().chain(&s.points).map(|p| p.1)).collect();
    let (mut x0, mut x1) =
        (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) =
        (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if !(x1 > x0) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 0.0);
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for &x in &xs {
        let n = 10f64.powf(x).round();
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{n}</text>"#,
            sx(x),
            H - BOTTOM + 16.0
        );
    }
    let span = (y1 - y0).max(1e-9);
    let step = (span / 8.0).ceil().max(1.0);
    let mut t = (y0 / step).ceil() * step;
    while t <= y1 + 1e-9 {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            sy(t) + 4.0,
            t as i64
        );
        t += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">width n</text>"#,
        LEFT + pw / 2.0,
        H - 18.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if ser.class == "bound" { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = ser.line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{}" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            ser.class,
            ser.label,
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="12" fill="{color}">{} ({})</text>"#,
            W - RIGHT + 12.0,
            ser.label,
            ser.class
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `sweep.<ext>` into `dir`.
pub fn emit_report(result: &SweepResult, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    if result.rows.is_empty() {
        return Err(Error::InvalidArgument("empty sweep result".into()));
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("sweep.{}", format.extension()));
    let body = match format {
        ReportFormat::Csv => to_csv_string(result)?,
        ReportFormat::Json => result.to_json()?,
        ReportFormat::Svg => to_svg_string(result),
    };
    std::fs::write(&path, body)?;
    Ok(path)
}
