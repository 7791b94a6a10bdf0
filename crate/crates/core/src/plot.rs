//! Deterministic SVG line plots of analysis results.
//!
//! Layout: one row per panel, stacked vertically. The last row of a standard
//! figure holds the forward CIR above the zero line and the backward CIR
//! below it on a reversed axis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cir::CirSeries;
use crate::error::{Error, Result};
use crate::model::Trajectory;

const WIDTH: f64 = 900.0;
const ROW_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const ROW_GAP: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub label: String,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Panel {
    Lines {
        title: String,
        lines: Vec<Line>,
    },
    /// `up` above the zero line, `down` below it with the axis reversed.
    Mirror {
        title: String,
        up: Line,
        down: Line,
    },
}

#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    t_lo: f64,
    t_hi: f64,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        self.x0 + (t - self.t_lo) / (self.t_hi - self.t_lo) * self.w
    }
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo <= hi).then_some((lo, hi))
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str) {
    if pts.len() == 1 {
        let (x, y) = pts[0];
        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, fmt(x), fmt(y));
        return;
    }
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
        coords.join(" ")
    );
}

fn axes(out: &mut String, f: &Frame, title: &str, y_ticks: &[(f64, String)]) {
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        fmt(f.x0),
        fmt(f.y0),
        fmt(f.w),
        fmt(f.h)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="13" font-family="sans-serif">{}</text>"#,
        fmt(f.x0),
        fmt(f.y0 - 8.0),
        escape(title)
    );
    for i in 0..=4 {
        let t = f.t_lo + (f.t_hi - f.t_lo) * i as f64 / 4.0;
        let x = f.px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{y}" x2="{x}" y2="{y2}" stroke="#333"/><text x="{x}" y="{yt}" font-size="11" font-family="sans-serif" text-anchor="middle">{}</text>"##,
            tick(t),
            x = fmt(x),
            y = fmt(f.y0 + f.h),
            y2 = fmt(f.y0 + f.h + 4.0),
            yt = fmt(f.y0 + f.h + 16.0),
        );
    }
    for (y, label) in y_ticks {
        let _ = writeln!(
            out,
            r##"<line x1="{x1}" y1="{y}" x2="{x0}" y2="{y}" stroke="#333"/><text x="{xt}" y="{yt}" font-size="11" font-family="sans-serif" text-anchor="end">{}</text>"##,
            escape(label),
            x1 = fmt(f.x0 - 4.0),
            x0 = fmt(f.x0),
            y = fmt(*y),
            xt = fmt(f.x0 - 6.0),
            yt = fmt(*y + 4.0),
        );
    }
}

fn legend(out: &mut String, f: &Frame, labels: &[(&str, &str)]) {
    for (i, (label, color)) in labels.iter().enumerate() {
        let x = f.x0 + f.w - 150.0;
        let y = f.y0 + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#,
            fmt(x),
            fmt(y - 4.0),
            fmt(x + 18.0),
            fmt(y - 4.0),
            fmt(x + 22.0),
            fmt(y),
            escape(label)
        );
    }
}

fn draw_lines(out: &mut String, f: &Frame, title: &str, lines: &[Line]) {
    let range = finite_range(lines.iter().flat_map(|l| l.v.iter().copied()));
    let (lo, hi) = range.map_or((0.0, 1.0), |(a, b)| padded(a, b));
    let py = |v: f64| f.y0 + f.h - (v - lo) / (hi - lo) * f.h;
    let ticks: Vec<(f64, String)> = (0..=4)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            (py(v), tick(v))
        })
        .collect();
    axes(out, f, title, &ticks);
    let mut labels = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = line
            .t
            .iter()
            .zip(&line.v)
            .filter(|(t, v)| t.is_finite() && v.is_finite())
            .map(|(t, v)| (f.px(*t), py(*v)))
            .collect();
        polyline(out, &pts, color);
        labels.push((line.label.as_str(), color));
    }
    legend(out, f, &labels);
}

fn draw_mirror(out: &mut String, f: &Frame, title: &str, up: &Line, down: &Line) {
    let top = finite_range(up.v.iter().copied()).map_or(1.0, |(_, b)| b.max(0.0));
    let bot = finite_range(down.v.iter().copied()).map_or(1.0, |(_, b)| b.max(0.0));
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let bot = if bot > 0.0 { bot * 1.05 } else { 1.0 };
    let mid = f.y0 + f.h / 2.0;
    let py_up = |v: f64| mid - v / top * (f.h / 2.0);
    let py_down = |v: f64| mid + v / bot * (f.h / 2.0);
    let ticks = vec![
        (py_up(top), tick(top)),
        (mid, "0".to_string()),
        (py_down(bot), tick(bot)),
    ];
    axes(out, f, title, &ticks);
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{m}" x2="{}" y2="{m}" stroke="#999" stroke-dasharray="4,3"/>"##,
        fmt(f.x0),
        fmt(f.x0 + f.w),
        m = fmt(mid)
    );
    let pick = |l: &Line, py: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        l.t.iter()
            .zip(&l.v)
            .filter(|(t, v)| t.is_finite() && v.is_finite())
            .map(|(t, v)| (f.px(*t), py(*v)))
            .collect()
    };
    polyline(out, &pick(up, &py_up), COLORS[0]);
    polyline(out, &pick(down, &py_down), COLORS[1]);
    legend(
        out,
        f,
        &[
            (up.label.as_str(), COLORS[0]),
            (&format!("{} (reversed)", down.label), COLORS[1]),
        ],
    );
}

/// Renders stacked panels sharing the time range.
pub fn render_svg(title: &str, panels: &[Panel]) -> String {
    let times = panels.iter().flat_map(|p| match p {
        Panel::Lines { lines, .. } => lines.iter().flat_map(|l| l.t.iter().copied()).collect::<Vec<_>>(),
        Panel::Mirror { up, down, .. } => up.t.iter().chain(&down.t).copied().collect(),
    });
    let (t_lo, t_hi) = finite_range(times).map_or((0.0, 1.0), |(a, b)| if b > a { (a, b) } else { padded(a, b) });
    let rows = panels.len().max(1) as f64;
    let height = MARGIN_TOP + rows * (ROW_HEIGHT + ROW_GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(WIDTH),
        fmt(height),
        fmt(WIDTH),
        fmt(height)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" font-size="14" font-family="sans-serif" font-weight="bold">{}</text>"#,
        fmt(MARGIN_LEFT),
        escape(title)
    );
    for (i, p) in panels.iter().enumerate() {
        let f = Frame {
            x0: MARGIN_LEFT,
            y0: MARGIN_TOP + ROW_GAP / 2.0 + i as f64 * (ROW_HEIGHT + ROW_GAP),
            w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            h: ROW_HEIGHT,
            t_lo,
            t_hi,
        };
        match p {
            Panel::Lines { title, lines } => draw_lines(&mut out, &f, title, lines),
            Panel::Mirror { title, up, down } => draw_mirror(&mut out, &f, title, up, down),
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Standard three-row figure: observed/hidden time series, ACI, CIR.
pub fn query_figure(series: &CirSeries, traj: &Trajectory, variables: &[String]) -> Vec<Panel> {
    let names = traj.all_names();
    let (lo, hi) = match (series.t.first(), series.t.last()) {
        (Some(a), Some(b)) => (traj.index_at(*a), traj.index_at(*b)),
        _ => (0, 0),
    };
    // Thin long paths to about 4000 points per line.
    let step = ((hi - lo) / 4000).max(1);
    let mut lines = Vec::new();
    if !series.is_empty() {
        for var in variables {
            let Some(pos) = names.iter().position(|n| n == var) else {
                continue;
            };
            let k = traj.observed_names.len();
            let value = |j: usize| {
                if pos < k {
                    Some(traj.x_path[j][pos])
                } else {
                    traj.y_path.as_ref().map(|y| y[j][pos - k])
                }
            };
            let idx: Vec<usize> = (lo..=hi).step_by(step).collect();
            let v: Option<Vec<f64>> = idx.iter().map(|&j| value(j)).collect();
            if let Some(v) = v {
                lines.push(Line {
                    label: var.clone(),
                    t: idx.iter().map(|&j| traj.time(j)).collect(),
                    v,
                });
            }
        }
    }
    vec![
        Panel::Lines {
            title: "time series".into(),
            lines,
        },
        Panel::Lines {
            title: format!("ACI {}", series.label),
            lines: vec![Line {
                label: "ACI".into(),
                t: series.t.clone(),
                v: series.aci.iter().map(|a| a.total).collect(),
            }],
        },
        Panel::Mirror {
            title: "CIR".into(),
            up: Line {
                label: "forward".into(),
                t: series.t.clone(),
                v: series.tau_forward_approx.clone(),
            },
            down: Line {
                label: "backward".into(),
                t: series.t.clone(),
                v: series.tau_backward_approx.clone(),
            },
        },
    ]
}

/// Which columns of a CIR CSV to plot.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotColumns {
    pub time: String,
    pub aci: String,
    pub forward: String,
    pub backward: String,
}

impl Default for PlotColumns {
    fn default() -> Self {
        PlotColumns {
            time: "t".into(),
            aci: "aci".into(),
            forward: "tau_f_approx".into(),
            backward: "tau_b_approx".into(),
        }
    }
}

/// Plots ACI and CIR columns of a CIR CSV file.
pub fn plot_csv(path: impl AsRef<Path>, cols: &PlotColumns) -> Result<String> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Parse {
            path: p.clone(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (it, ia, iforw, ib) = (
        col(&cols.time)?,
        col(&cols.aci)?,
        col(&cols.forward)?,
        col(&cols.backward)?,
    );
    let mut t = Vec::new();
    let mut a = Vec::new();
    let mut fw = Vec::new();
    let mut bw = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: p.clone(),
                    line: n + 2,
                    message: format!("bad value in column {}", i + 1),
                })
        };
        t.push(get(it)?);
        a.push(get(ia)?);
        fw.push(get(iforw)?);
        bw.push(get(ib)?);
    }
    let title = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series")
        .to_string();
    let panels = vec![
        Panel::Lines {
            title: "ACI".into(),
            lines: vec![Line {
                label: cols.aci.clone(),
                t: t.clone(),
                v: a,
            }],
        },
        Panel::Mirror {
            title: "CIR".into(),
            up: Line {
                label: cols.forward.clone(),
                t: t.clone(),
                v: fw,
            },
            down: Line {
                label: cols.backward.clone(),
                t,
                v: bw,
            },
        },
    ];
    Ok(render_svg(&title, &panels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(t: Vec<f64>, v: Vec<f64>) -> Line {
        Line {
            label: "v".into(),
            t,
            v,
        }
    }

    #[test]
    fn empty_series_has_axes_only() {
        let svg = render_svg(
            "empty",
            &[Panel::Lines {
                title: "a".into(),
                lines: vec![line(vec![], vec![])],
            }],
        );
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("<rect x="));
        assert!(!svg.contains("<polyline") && !svg.contains("<circle"));
    }

    #[test]
    fn single_point_is_a_marker() {
        let svg = render_svg(
            "one",
            &[Panel::Lines {
                title: "a".into(),
                lines: vec![line(vec![2.0], vec![0.5])],
            }],
        );
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let panels = vec![Panel::Mirror {
            title: "CIR".into(),
            up: line(vec![0.0, 1.0, 2.0], vec![0.1, 0.3, 0.2]),
            down: line(vec![0.0, 1.0, 2.0], vec![0.01, 0.02, 0.015]),
        }];
        assert_eq!(render_svg("x", &panels), render_svg("x", &panels));
        assert!(render_svg("x", &panels).contains("(reversed)"));
    }

    #[test]
    fn backward_axis_is_reversed() {
        let f = Frame {
            x0: 0.0,
            y0: 0.0,
            w: 100.0,
            h: 100.0,
            t_lo: 0.0,
            t_hi: 1.0,
        };
        let mut out = String::new();
        draw_mirror(
            &mut out,
            &f,
            "c",
            &line(vec![0.0], vec![1.0]),
            &line(vec![0.0], vec![1.0]),
        );
        // Forward marker above the midline, backward below.
        let ys: Vec<f64> = out
            .match_indices("cy=\"")
            .map(|(i, _)| out[i + 4..].split('"').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(ys.len(), 2);
        assert!(ys[0] < 50.0 && ys[1] > 50.0);
    }

    #[test]
    fn csv_plot_reports_missing_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "t,aci\n0,1\n").unwrap();
        assert!(matches!(
            plot_csv(&path, &PlotColumns::default()),
            Err(Error::Parse { .. })
        ));
        fs::write(&path, "t,aci,tau_f_approx,tau_b_approx\n0,1,0.2,0.1\n1,0.5,0.1,0.1\n").unwrap();
        let svg = plot_csv(&path, &PlotColumns::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
}
