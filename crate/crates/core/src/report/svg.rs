use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Horizontal bars, top to bottom in series order, optional whiskers.
    Bar,
    /// One polyline.
    Curve,
    /// Many thin polylines; a series named `mean` is drawn on top, thick.
    CurveFamily,
    /// Points with the `y = x` reference diagonal.
    Scatter,
    /// Signed rule bars on the left, `feature = value` text on the right.
    RulePanel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Category labels for bar and rule-panel rows.
    pub labels: Vec<String>,
    /// Whisker half-lengths, one per bar.
    pub error_bars: Option<Vec<f64>>,
    /// Right-column text for rule panels, one per row.
    pub annotations: Vec<String>,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, title: &str, x_label: &str, y_label: &str) -> Self {
        PlotSpec {
            kind,
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            labels: Vec::new(),
            error_bars: None,
            annotations: Vec::new(),
        }
    }

    /// Bar chart of `values` labelled by `labels`, in the given order.
    pub fn bar(title: &str, x_label: &str, labels: Vec<String>, values: Vec<f64>, errors: Option<Vec<f64>>) -> Self {
        let mut s = PlotSpec::new(PlotKind::Bar, title, x_label, "");
        s.series.push(Series {
            name: "value".into(),
            x: (0..values.len()).map(|i| i as f64).collect(),
            y: values,
        });
        s.labels = labels;
        s.error_bars = errors;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .series
            .first()
            .ok_or_else(|| Error::invalid(format!("plot `{}` has no series", self.title)))?;
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(Error::invalid(format!("series `{}` has {} x and {} y values", s.name, s.x.len(), s.y.len())));
            }
            if s.y.is_empty() {
                return Err(Error::invalid(format!("series `{}` is empty", s.name)));
            }
        }
        if let Some(e) = &self.error_bars {
            if e.len() != first.y.len() {
                return Err(Error::invalid("error bars differ in length from the series"));
            }
        }
        if matches!(self.kind, PlotKind::Bar | PlotKind::RulePanel) && self.labels.len() != first.y.len() {
            return Err(Error::invalid("bar labels differ in length from the series"));
        }
        if self.kind == PlotKind::RulePanel && self.annotations.len() != first.y.len() {
            return Err(Error::invalid("rule panel annotations differ in length from the series"));
        }
        Ok(())
    }
}

const POSITIVE: &str = "#e6862e";
const NEGATIVE: &str = "#3b75af";
const INK: &str = "#222222";
const GRID: &str = "#dddddd";

fn esc(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            _ => o.push(c),
        }
    }
    o
}

/// Two-decimal coordinates keep the bytes stable and the files small.
fn n(v: f64) -> String {
    let r = format!("{v:.2}");
    if r == "-0.00" { "0.00".into() } else { r }
}

/// Short tick label.
fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.into() }
    }
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if lo == hi {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return Range { lo: lo - pad, hi: hi + pad };
        }
        Range { lo, hi }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(width: f64, height: f64, title: &str) -> Canvas {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = n(width),
            h = n(height)
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, n(width), n(height));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14" font-weight="bold">{}</text>"#,
            n(width / 2.0),
            esc(title)
        );
        Canvas { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2),
            n(width)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            n(x),
            n(y),
            n(w.max(0.0)),
            n(h.max(0.0))
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.out, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, n(x), n(y), esc(s));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, opacity: f64) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", n(*x), n(*y))).collect();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}" stroke-opacity="{}"/>"#,
            p.join(" "),
            n(width),
            n(opacity)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.out, r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}" fill-opacity="0.7"/>"#, n(x), n(y), n(r));
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Plot box in canvas coordinates.
struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

fn axes(c: &mut Canvas, f: &Frame, xr: &Range, yr: &Range, x_label: &str, y_label: &str) {
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = xr.lo + t * (xr.hi - xr.lo);
        let px = xr.map(xv, f.left, f.right);
        c.line(px, f.top, px, f.bottom, GRID, 1.0);
        c.text(px, f.bottom + 16.0, "middle", &tick(xv));
        let yv = yr.lo + t * (yr.hi - yr.lo);
        let py = yr.map(yv, f.bottom, f.top);
        c.line(f.left, py, f.right, py, GRID, 1.0);
        c.text(f.left - 6.0, py + 4.0, "end", &tick(yv));
    }
    c.line(f.left, f.bottom, f.right, f.bottom, INK, 1.0);
    c.line(f.left, f.top, f.left, f.bottom, INK, 1.0);
    c.text((f.left + f.right) / 2.0, f.bottom + 36.0, "middle", x_label);
    let _ = writeln!(
        c.out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        n((f.top + f.bottom) / 2.0),
        n((f.top + f.bottom) / 2.0),
        esc(y_label)
    );
}

fn render_xy(spec: &PlotSpec) -> String {
    let mut c = Canvas::new(640.0, 420.0, &spec.title);
    let f = Frame {
        left: 70.0,
        right: 620.0,
        top: 40.0,
        bottom: 360.0,
    };
    let xs = spec.series.iter().flat_map(|s| s.x.iter().copied());
    let ys = spec.series.iter().flat_map(|s| s.y.iter().copied());
    let (xr, yr) = if spec.kind == PlotKind::Scatter {
        let r = Range::of(xs.chain(ys));
        (Range { lo: r.lo, hi: r.hi }, r)
    } else {
        (Range::of(xs), Range::of(ys))
    };
    axes(&mut c, &f, &xr, &yr, &spec.x_label, &spec.y_label);
    let pts = |s: &Series| -> Vec<(f64, f64)> {
        s.x.iter()
            .zip(&s.y)
            .map(|(&x, &y)| (xr.map(x, f.left, f.right), yr.map(y, f.bottom, f.top)))
            .collect()
    };
    match spec.kind {
        PlotKind::Curve => {
            for s in &spec.series {
                c.polyline(&pts(s), NEGATIVE, 2.0, 1.0);
            }
        }
        PlotKind::CurveFamily => {
            for s in spec.series.iter().filter(|s| s.name != "mean") {
                c.polyline(&pts(s), "#888888", 0.8, 0.4);
            }
            for s in spec.series.iter().filter(|s| s.name == "mean") {
                c.polyline(&pts(s), POSITIVE, 2.5, 1.0);
            }
        }
        PlotKind::Scatter => {
            let (a, b) = (xr.lo, xr.hi);
            c.line(xr.map(a, f.left, f.right), yr.map(a, f.bottom, f.top), xr.map(b, f.left, f.right), yr.map(b, f.bottom, f.top), INK, 1.0);
            for s in &spec.series {
                for (x, y) in pts(s) {
                    c.circle(x, y, 3.0, NEGATIVE);
                }
            }
        }
        PlotKind::Bar | PlotKind::RulePanel => unreachable!("bar kinds are rendered separately"),
    }
    c.finish()
}

fn render_bars(spec: &PlotSpec) -> String {
    let values = &spec.series[0].y;
    let rows = values.len() as f64;
    let row_h = 24.0;
    let panel = spec.kind == PlotKind::RulePanel;
    let label_w = 12.0 + 7.0 * spec.labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
    let left = 10.0 + label_w;
    let bars_w = 360.0;
    let note_w = if panel {
        30.0 + 7.0 * spec.annotations.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64
    } else {
        0.0
    };
    let width = left + bars_w + 30.0 + note_w;
    let top = 40.0;
    let bottom = top + rows * row_h;
    let mut c = Canvas::new(width, bottom + 50.0, &spec.title);

    let errs = spec.error_bars.clone().unwrap_or_else(|| vec![0.0; values.len()]);
    let hi = values.iter().zip(&errs).map(|(v, e)| v + e).fold(0.0, f64::max);
    let lo = values.iter().zip(&errs).map(|(v, e)| v - e.abs()).fold(0.0, f64::min);
    let lo = if lo < 0.0 && !panel && values.iter().all(|v| *v >= 0.0) { 0.0 } else { lo };
    let xr = Range::of([lo, hi].into_iter());
    let right = left + bars_w;
    let zero = xr.map(0.0, left, right);

    for k in 0..=4 {
        let v = xr.lo + k as f64 / 4.0 * (xr.hi - xr.lo);
        let px = xr.map(v, left, right);
        c.line(px, top, px, bottom, GRID, 1.0);
        c.text(px, bottom + 16.0, "middle", &tick(v));
    }
    for (i, (&v, label)) in values.iter().zip(&spec.labels).enumerate() {
        let y = top + i as f64 * row_h;
        let px = xr.map(v, left, right);
        let fill = if v >= 0.0 { POSITIVE } else { NEGATIVE };
        c.rect(zero.min(px), y + 4.0, (px - zero).abs(), row_h - 8.0, if panel { fill } else { NEGATIVE });
        c.text(left - 6.0, y + row_h / 2.0 + 4.0, "end", label);
        if errs[i] > 0.0 {
            let a = xr.map(v - errs[i], left, right);
            let b = xr.map(v + errs[i], left, right);
            let mid = y + row_h / 2.0;
            c.line(a, mid, b, mid, INK, 1.5);
            c.line(a, mid - 4.0, a, mid + 4.0, INK, 1.5);
            c.line(b, mid - 4.0, b, mid + 4.0, INK, 1.5);
        }
        if panel {
            c.text(right + 30.0, y + row_h / 2.0 + 4.0, "start", &spec.annotations[i]);
        }
    }
    c.line(zero, top, zero, bottom, INK, 1.0);
    c.text((left + right) / 2.0, bottom + 36.0, "middle", &spec.x_label);
    c.finish()
}

/// SVG text for a plot; identical specs give identical bytes.
pub fn render_to_string(spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    Ok(match spec.kind {
        PlotKind::Bar | PlotKind::RulePanel => render_bars(spec),
        _ => render_xy(spec),
    })
}

pub fn render(spec: &PlotSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_to_string(spec)?).map_err(|e| Error::io(path, e))
}
