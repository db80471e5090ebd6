//! Deterministic SVG line charts from series files.
//!
//! A series file has a provenance comment line followed by
//! `group,trial,value,sd,gap`. Each group becomes one line; gaps break the
//! line rather than being interpolated, and a `sd` column draws a ±1 SD
//! envelope around the mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::experiment::{SERIES_FILES, TOOL_VERSION};
use crate::stats::{GroupBy, Metric, SeriesPoint};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("series file {} not found", .0.display())]
    Missing(PathBuf),
    #[error("{}:{line}: {message}", .path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFile {
    /// The provenance comment without its leading `#`.
    pub provenance: String,
    pub points: Vec<SeriesPoint>,
}

fn opt_f64(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| format!("invalid number {s:?}"))
}

pub fn parse_series(text: &str, path: &Path) -> Result<SeriesFile, PlotError> {
    let fmt = |line: usize, message: String| PlotError::Format { path: path.to_path_buf(), line, message };
    let provenance = text.lines().next().and_then(|l| l.strip_prefix('#')).map(|l| l.trim().to_string()).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| fmt(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["group", "trial", "value", "sd", "gap"] {
        return Err(fmt(2, format!("expected columns group,trial,value,sd,gap, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| fmt(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let trial = rec[1].parse::<usize>().map_err(|_| fmt(line, format!("invalid trial {:?}", &rec[1])))?;
        let value = opt_f64(&rec[2]).map_err(|m| fmt(line, m))?;
        let sd = opt_f64(&rec[3]).map_err(|m| fmt(line, m))?;
        let gap = match &rec[4] {
            "1" => true,
            "0" => false,
            other => return Err(fmt(line, format!("invalid gap flag {other:?}"))),
        };
        points.push(SeriesPoint { group: rec[0].to_string(), trial, value: if gap { None } else { value }, sd });
    }
    Ok(SeriesFile { provenance, points })
}

pub fn read_series(path: &Path) -> Result<SeriesFile, PlotError> {
    if !path.exists() {
        return Err(PlotError::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| PlotError::Io { path: path.to_path_buf(), source })?;
    parse_series(&text, path)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Smallest 1-2-2.5-5 × 10^k step bound at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&c| c >= v - 1e-12).unwrap_or(10.0 * mag)
}

/// Maximal runs of consecutive points with a value.
fn segments(points: &[&SeriesPoint]) -> Vec<Vec<(usize, f64, Option<f64>)>> {
    let mut out: Vec<Vec<(usize, f64, Option<f64>)>> = Vec::new();
    let mut current = Vec::new();
    let mut last_trial = None;
    for p in points {
        let contiguous = last_trial.is_some_and(|t: usize| p.trial == t + 1);
        match p.value {
            Some(v) if v.is_finite() => {
                if !contiguous && !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                current.push((p.trial, v, p.sd.filter(|s| s.is_finite())));
            }
            _ => {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
            }
        }
        last_trial = Some(p.trial);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Renders one chart. Identical input gives byte-identical output.
pub fn render_svg(series: &SeriesFile, title: &str, y_label: &str) -> String {
    let mut groups: BTreeMap<&str, Vec<&SeriesPoint>> = BTreeMap::new();
    let mut order = Vec::new();
    for p in &series.points {
        if !groups.contains_key(p.group.as_str()) {
            order.push(p.group.as_str());
        }
        groups.entry(p.group.as_str()).or_default().push(p);
    }
    for pts in groups.values_mut() {
        pts.sort_by_key(|p| p.trial);
    }
    let max_trial = series.points.iter().map(|p| p.trial).max().unwrap_or(1).max(2);
    let min_trial = series.points.iter().map(|p| p.trial).min().unwrap_or(1).min(max_trial - 1);
    let top_value = series
        .points
        .iter()
        .filter_map(|p| p.value.map(|v| v + p.sd.unwrap_or(0.0)))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let y_max = nice_ceiling(top_value);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |t: usize| LEFT + (t - min_trial) as f64 / (max_trial - min_trial) as f64 * plot_w;
    let sy = |v: f64| TOP + plot_h - (v.clamp(0.0, y_max) / y_max) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, "<!-- {} plot_tool_version={TOOL_VERSION} -->", escape(&series.provenance));
    let _ = writeln!(s, "<desc>{} plot_tool_version={TOOL_VERSION}</desc>", escape(&series.provenance));
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, escape(title));

    // axes, grid and ticks
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, trim_number(v));
    }
    let step = if max_trial - min_trial > 12 { 2 } else { 1 };
    for t in (min_trial..=max_trial).filter(|t| (t - min_trial) % step == 0) {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, TOP + plot_h + 19.0);
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{LEFT:.2},{TOP:.2} {LEFT:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#000"/>"##,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Trial</text>"#, LEFT + plot_w / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (gi, group) in order.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let segs = segments(&groups[group]);
        let _ = writeln!(s, r#"<g class="series" data-group="{}">"#, escape(group));
        // envelopes first so that mean lines stay on top
        for seg in &segs {
            for run in seg.split(|p| p.2.is_none()).filter(|r| r.len() >= 2) {
                let upper = run.iter().map(|&(t, v, sd)| format!("{:.2},{:.2}", sx(t), sy(v + sd.unwrap())));
                let lower = run.iter().rev().map(|&(t, v, sd)| format!("{:.2},{:.2}", sx(t), sy(v - sd.unwrap())));
                let pts: Vec<String> = upper.chain(lower).collect();
                let _ = writeln!(s, r#"<polygon class="envelope" points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "));
            }
        }
        for seg in &segs {
            if seg.len() == 1 {
                let (t, v, _) = seg[0];
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(t), sy(v));
            } else {
                let pts: Vec<String> = seg.iter().map(|&(t, v, _)| format!("{:.2},{:.2}", sx(t), sy(v))).collect();
                let _ = writeln!(s, r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
            }
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + gi as f64 * 20.0;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, escape(group));
    }
    if series.points.iter().any(|p| p.sd.is_some()) {
        let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#555">Shaded bands: mean ± 1 SD</text>"##, LEFT, HEIGHT - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn trim_number(v: f64) -> String {
    let t = format!("{v:.2}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn chart_labels(metric: Metric, by: GroupBy) -> (String, &'static str) {
    let what = match by {
        GroupBy::K => "by landscape complexity",
        GroupBy::Population => "by population",
    };
    let (title, y) = match metric {
        Metric::ActiveFraction => ("Share of active search", "Fraction of runs searching"),
        Metric::DistanceMean => ("Search distance when searching", "Mean search distance"),
        Metric::ForwardRatioMean => ("Forward-looking ratio", "Mean forward/backward ratio"),
    };
    (format!("{title} {what}"), y)
}

/// Writes one SVG per series file of an analysis directory. Every series
/// must be present.
pub fn plot_dir(series_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let loaded: Vec<_> = SERIES_FILES
        .iter()
        .map(|&(name, metric, by)| read_series(&series_dir.join(name)).map(|s| (name, metric, by, s)))
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError::Io { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    for (name, metric, by, series) in loaded {
        let (title, y) = chart_labels(metric, by);
        let path = out_dir.join(name.replace(".csv", ".svg"));
        std::fs::write(&path, render_svg(&series, &title, y)).map_err(|source| PlotError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
