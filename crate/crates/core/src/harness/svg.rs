//! Minimal static line-plot renderer. Output depends only on the input
//! data, so repeated renders are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use super::{write_file, HarnessError};

const WIDTH: f64 = 820.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 45.0;
/// Series longer than this are decimated (first and last points kept).
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
    DashDot,
}

impl LineStyle {
    fn dasharray(self) -> Option<&'static str> {
        match self {
            Self::Solid => None,
            Self::Dashed => Some("8,4"),
            Self::DashDot => Some("8,4,2,4"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub style: LineStyle,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub panels: Vec<Panel>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range_with_padding(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

/// Rounded tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn decimate(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().step_by(stride).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().unwrap());
    }
    out
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) -> Result<(), HarnessError> {
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite() && (!panel.log_y || p.1 > 0.0);
    let pts: Vec<(f64, f64)> = panel.series.iter().flat_map(|s| s.points.iter().filter(finite).copied()).collect();
    if pts.is_empty() {
        return Err(HarnessError::EmptySeries(panel.title.clone()));
    }
    let ty = |v: f64| if panel.log_y { v.log10() } else { v };
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(ty(y));
        y_hi = y_hi.max(ty(y));
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let (y_lo, y_hi) = range_with_padding(y_lo, y_hi);
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (ptop, pbot) = (top + MARGIN_TOP, top + PANEL_HEIGHT - MARGIN_BOTTOM);
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * (right - left);
    let sy = |y: f64| pbot - (y - y_lo) / (y_hi - y_lo) * (pbot - ptop);

    let _ = writeln!(out, r##"<g class="panel">"##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"##,
        (left + right) / 2.0,
        top + 22.0,
        esc(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{ptop:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
        right - left,
        pbot - ptop
    );
    for t in ticks(x_lo, x_hi, 6) {
        let x = sx(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{pbot:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, pbot + 5.0);
        let _ = writeln!(
            out,
            r##"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
            pbot + 18.0,
            tick_label(t)
        );
    }
    for t in ticks(y_lo, y_hi, 5) {
        let y = sy(t);
        let label = if panel.log_y { format!("1e{}", tick_label(t)) } else { tick_label(t) };
        let _ = writeln!(out, r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#000"/>"##, left - 5.0);
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{label}</text>"##,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"##,
        (left + right) / 2.0,
        pbot + 36.0,
        esc(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"##,
        left - 55.0,
        (ptop + pbot) / 2.0,
        left - 55.0,
        (ptop + pbot) / 2.0,
        esc(&panel.y_label)
    );
    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().filter(finite).copied().collect();
        let pts = decimate(&pts);
        let mut d = String::with_capacity(pts.len() * 16);
        for (k, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(*x), sy(ty(*y)));
        }
        let dash = s.style.dasharray().map(|a| format!(r#" stroke-dasharray="{a}""#)).unwrap_or_default();
        let _ = writeln!(out, r##"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"##);
        let ly = ptop + 14.0 + 18.0 * i as f64;
        let lx = right + 12.0;
        let _ = writeln!(
            out,
            r##"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"##,
            lx + 30.0
        );
        let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##, lx + 36.0, ly + 4.0, esc(&s.name));
    }
    let _ = writeln!(out, "</g>");
    Ok(())
}

pub fn render_svg(fig: &Figure) -> Result<String, HarnessError> {
    if fig.panels.is_empty() {
        return Err(HarnessError::EmptySeries(fig.title.clone()));
    }
    let height = 30.0 + PANEL_HEIGHT * fig.panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"##
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#fff"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="20" font-size="16" text-anchor="middle">{}</text>"##,
        WIDTH / 2.0,
        esc(&fig.title)
    );
    for (i, p) in fig.panels.iter().enumerate() {
        render_panel(&mut out, p, 30.0 + PANEL_HEIGHT * i as f64)?;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg(fig: &Figure, path: &Path) -> Result<(), HarnessError> {
    write_file(path, render_svg(fig)?.as_bytes())
}
