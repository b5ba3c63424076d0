//! SVG figures from a sweep report. Pure functions of the report text.

use std::fmt::Write;

use crate::sweep::{SlopeFit, SweepReport};
use crate::{HarnessError, Result};

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// `slope = 1.000 ± 0.000`, the half-width being the larger side of the bootstrap interval.
pub fn slope_annotation(fit: &SlopeFit) -> String {
    let half = (fit.slope - fit.ci_low).max(fit.ci_high - fit.slope).max(0.0);
    format!("slope = {:.3} ± {:.3}", fit.slope, half)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.filter(|a| a.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a), h.max(a)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Self { x: span(&mut xs.clone()), y: span(&mut ys.clone()) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(title: &str, xlabel: &str, ylabel: &str, fr: &Frame, log_ticks: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
    let fmt = |v: f64| if log_ticks { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let xv = fr.x.0 + a * (fr.x.1 - fr.x.0);
        let yv = fr.y.0 + a * (fr.y.1 - fr.y.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, fr.px(xv), H - BOTTOM + 16.0, fmt(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 4.0, fr.py(yv) + 4.0, fmt(yv));
    }
    s
}

/// Log-log total error against `ħ` at time `t`, with the fitted lines.
fn error_figure(report: &SweepReport, t: f64) -> String {
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.t == t && r.total_error > 0.0 && r.hbar > 0.0)
        .map(|r| (r.hbar.log10(), r.total_error.log10()))
        .collect();
    let fits: Vec<&SlopeFit> = report.fits.iter().filter(|f| f.t == t).collect();
    let fr = Frame::new(pts.iter().map(|p| p.0), pts.iter().map(|p| p.1));
    let mut s = open(&format!("total error vs ħ at t = {t}"), "log10 ħ", "log10 total error", &fr, true);
    for &(x, y) in &pts {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, fr.px(x), fr.py(y), COLORS[0]);
    }
    for f in &fits {
        if f.floor_subtracted {
            continue;
        }
        let ln10 = std::f64::consts::LN_10;
        let y = |x: f64| (f.intercept + f.slope * x * ln10) / ln10;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"/>"#,
            fr.px(fr.x.0),
            fr.py(y(fr.x.0)),
            fr.px(fr.x.1),
            fr.py(y(fr.x.1)),
            COLORS[1]
        );
    }
    let mut row = 0;
    for f in &fits {
        let label = if f.floor_subtracted {
            format!("t = 0 subtracted: {}", slope_annotation(f))
        } else {
            slope_annotation(f)
        };
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, LEFT + 10.0, TOP + 18.0 + 16.0 * row as f64, escape(&label));
        row += 1;
    }
    s.push_str("</svg>\n");
    s
}

/// Relative energy drift and trace drift against time, one polyline per cell.
fn conserved_figure(report: &SweepReport, energy: bool) -> String {
    let series: Vec<Vec<(f64, f64)>> = report
        .cells
        .iter()
        .filter(|c| !c.series.is_empty())
        .map(|c| {
            let p0 = c.series[0];
            c.series
                .iter()
                .map(|p| {
                    let v = if energy {
                        (p.energy - p0.energy) / p0.energy.abs().max(1e-300)
                    } else {
                        p.trace - p0.trace
                    };
                    (p.t, v)
                })
                .collect()
        })
        .collect();
    let fr = Frame::new(series.iter().flatten().map(|p| p.0), series.iter().flatten().map(|p| p.1));
    let (title, ylabel) = if energy {
        ("relative energy drift", "(Ɛ(t) − Ɛ(0))/|Ɛ(0)|")
    } else {
        ("trace drift", "h Tr op(t) − h Tr op(0)")
    };
    let mut s = open(title, "t", ylabel, &fr, false);
    for (i, (ser, c)) in series.iter().zip(report.cells.iter().filter(|c| !c.series.is_empty())).enumerate() {
        let pts: Vec<String> =
            ser.iter().filter(|p| p.1.is_finite()).map(|&(t, v)| format!("{:.2},{:.2}", fr.px(t), fr.py(v))).collect();
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">ħ = {:.4e}</text>"#,
            W - RIGHT - 130.0,
            TOP + 18.0 + 14.0 * i as f64,
            c.hbar
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Parses a report and returns `(file name, SVG text)` pairs.
pub fn plot(report_json: &str) -> Result<Vec<(String, String)>> {
    let report: SweepReport =
        serde_json::from_str(report_json).map_err(|e| HarnessError::Report(format!("malformed report: {e}")))?;
    plot_report(&report)
}

pub fn plot_report(report: &SweepReport) -> Result<Vec<(String, String)>> {
    if report.rows.is_empty() {
        return Err(HarnessError::Report("empty report: no rows to plot".into()));
    }
    let mut times: Vec<f64> = report.rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut out: Vec<(String, String)> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| (format!("error_vs_hbar_{i:02}.svg"), error_figure(report, t)))
        .collect();
    if report.cells.iter().any(|c| !c.series.is_empty()) {
        out.push(("energy_drift.svg".into(), conserved_figure(report, true)));
        out.push(("trace_drift.svg".into(), conserved_figure(report, false)));
    }
    Ok(out)
}
