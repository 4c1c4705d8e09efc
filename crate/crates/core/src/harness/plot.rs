//! Minimal SVG line charts for benchmark reports.
//!
//! Each series is a `<g class="series" data-method=…>` group whose points
//! carry their exact plotted values in `data-x` / `data-y`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkReport, HarnessError, ReportRow};
use crate::estimators::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Mean estimate with its CI band against trajectory count.
    Estimate,
    /// Natural log of RMSE against trajectory count.
    LogRmse,
    /// RMSE at the largest trajectory count against `alpha`, or against ASD
    /// when `alpha` is constant.
    Sensitivity,
}

impl std::str::FromStr for PlotKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "estimate" => Ok(PlotKind::Estimate),
            "log_rmse" | "log-rmse" => Ok(PlotKind::LogRmse),
            "sensitivity" => Ok(PlotKind::Sensitivity),
            other => Err(HarnessError::Config(format!("unknown plot kind `{other}`"))),
        }
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn color(m: Method) -> &'static str {
    match m {
        Method::Balanced => "#1f77b4",
        Method::DirectMethod => "#ff7f0e",
        Method::DoublyRobust => "#2ca02c",
        Method::Ips => "#d62728",
    }
}

struct Point {
    x: f64,
    y: f64,
    band: Option<(f64, f64)>,
}

struct Series {
    method: Method,
    label: String,
    points: Vec<Point>,
}

fn conditions(rows: &[ReportRow]) -> Vec<(u64, u64)> {
    let mut c: Vec<(u64, u64)> = rows.iter().map(|r| (r.alpha.to_bits(), r.asd.to_bits())).collect();
    c.sort_unstable();
    c.dedup();
    c
}

fn build_series(report: &BenchmarkReport, kind: PlotKind) -> (Vec<Series>, &'static str, &'static str) {
    let conds = conditions(&report.rows);
    let mut grouped: BTreeMap<(Method, u64, u64), Vec<&ReportRow>> = BTreeMap::new();
    match kind {
        PlotKind::Estimate | PlotKind::LogRmse => {
            for r in &report.rows {
                grouped.entry((r.method, r.alpha.to_bits(), r.asd.to_bits())).or_default().push(r);
            }
            let series = grouped
                .into_iter()
                .map(|((method, a, s), rows)| {
                    let label = if conds.len() > 1 {
                        format!("{} (alpha={}, asd={:.3})", method.tag(), f64::from_bits(a), f64::from_bits(s))
                    } else {
                        method.tag().to_string()
                    };
                    let points = rows
                        .iter()
                        .map(|r| match kind {
                            PlotKind::Estimate => Point {
                                x: r.n_traj as f64,
                                y: r.mean_estimate,
                                band: r.ci_low.zip(r.ci_high),
                            },
                            _ => Point { x: r.n_traj as f64, y: r.log_rmse, band: None },
                        })
                        .collect();
                    Series { method, label, points }
                })
                .collect();
            let y = if kind == PlotKind::Estimate { "policy value" } else { "log RMSE" };
            (series, "trajectories", y)
        }
        PlotKind::Sensitivity => {
            let n_max = report.rows.iter().map(|r| r.n_traj).max().unwrap_or(0);
            let mut alphas: Vec<u64> = report.rows.iter().map(|r| r.alpha.to_bits()).collect();
            alphas.sort_unstable();
            alphas.dedup();
            let by_alpha = alphas.len() > 1;
            let mut per_method: BTreeMap<Method, Vec<Point>> = BTreeMap::new();
            for r in report.rows.iter().filter(|r| r.n_traj == n_max) {
                let x = if by_alpha { r.alpha } else { r.asd };
                per_method.entry(r.method).or_default().push(Point { x, y: r.rmse, band: None });
            }
            let series = per_method
                .into_iter()
                .map(|(method, mut points)| {
                    points.sort_by(|p, q| p.x.total_cmp(&q.x));
                    Series { method, label: method.tag().to_string(), points }
                })
                .collect();
            (series, if by_alpha { "alpha" } else { "ASD" }, "RMSE")
        }
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

/// Renders the report as an SVG document.
pub fn render_svg(report: &BenchmarkReport, kind: PlotKind) -> String {
    let (series, x_label, y_label) = build_series(report, kind);
    let truths: Vec<f64> = if kind == PlotKind::Estimate {
        report.ground_truth.iter().map(|g| g.value).collect()
    } else {
        Vec::new()
    };

    let finite = |v: f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).filter(|v| finite(*v)).collect();
    let mut ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().flat_map(|p| [Some(p.y), p.band.map(|b| b.0), p.band.map(|b| b.1)]))
        .flatten()
        .filter(|v| finite(*v))
        .collect();
    ys.extend(truths.iter().copied().filter(|v| finite(*v)));
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect class="frame" x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for t in nice_ticks(x0, x1) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(t),
            TOP + plot_h + 16.0,
            format_tick(t)
        );
    }
    for t in nice_ticks(y0, y1) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(t) + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for v in truths.iter().filter(|v| finite(**v)) {
        let _ = writeln!(
            svg,
            r##"<line class="ground-truth" data-y="{v}" x1="{LEFT}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#000" stroke-dasharray="6 4"/>"##,
            LEFT + plot_w,
            py(*v),
            py(*v)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let c = color(s.method);
        let _ = writeln!(svg, r#"<g class="series" data-method="{}" data-label="{}">"#, s.method.tag(), s.label);
        let banded: Vec<(f64, (f64, f64))> =
            s.points.iter().filter_map(|p| p.band.map(|b| (p.x, b))).filter(|(_, b)| finite(b.0) && finite(b.1)).collect();
        if banded.len() >= 2 {
            let mut pts: Vec<String> = banded.iter().map(|(x, b)| format!("{:.2},{:.2}", px(*x), py(b.1))).collect();
            pts.extend(banded.iter().rev().map(|(x, b)| format!("{:.2},{:.2}", px(*x), py(b.0))));
            let _ = writeln!(svg, r#"<polygon class="ci-band" points="{}" fill="{c}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "));
        }
        let drawable: Vec<&Point> = s.points.iter().filter(|p| finite(p.x) && finite(p.y)).collect();
        let line: Vec<String> = drawable.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        for p in &s.points {
            if finite(p.x) && finite(p.y) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}" data-x="{}" data-y="{}"/>"#,
                    px(p.x),
                    py(p.y),
                    p.x,
                    p.y
                );
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" x2="{:.2}" y1="{ly}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, ly + 4.0, s.label);
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(t: f64) -> String {
    if t.abs() >= 100.0 {
        format!("{t:.0}")
    } else {
        format!("{t:.2}")
    }
}

pub fn emit_plot(report: &BenchmarkReport, path: &Path, kind: PlotKind) -> Result<(), HarnessError> {
    std::fs::write(path, render_svg(report, kind))
        .map_err(|e| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() })
}
