//! Standalone SVG figures: persistence diagrams and order-statistic histograms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagram::PersistenceDiagram;
use crate::error::{Error, Result};
use crate::inference::OrderStatReport;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// What to draw.
#[derive(Debug, Clone, Copy)]
pub enum Figure<'a> {
    Diagrams(&'a [PersistenceDiagram]),
    Report(&'a OrderStatReport),
}

pub fn emit_svg(figure: Figure<'_>, path: &Path) -> Result<()> {
    let svg = match figure {
        Figure::Diagrams(d) => diagram_svg(d),
        Figure::Report(r) => report_svg(r),
    };
    fs::write(path, svg).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
}

/// Affine map from data to one plotting panel.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * self.h
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x1, y1) = (self.x0 + self.w, self.y0 + self.h);
        let _ = writeln!(
            out,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}L{:.2} {:.2}" fill="none" stroke="black"/>"#,
            self.x0, self.y0, self.x0, y1, x1, y1
        );
        for t in 0..=4 {
            let f = t as f64 / 4.0;
            let xv = self.lo[0] + f * (self.hi[0] - self.lo[0]);
            let yv = self.lo[1] + f * (self.hi[1] - self.lo[1]);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                y1 + 14.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                py + 3.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
            self.x0 + self.w / 2.0,
            y1 + 32.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{ylabel}</text>"#,
            self.x0 - 34.0,
            self.y0 + self.h / 2.0,
            self.x0 - 34.0,
            self.y0 + self.h / 2.0
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Equal-aspect bounds covering every point and the diagonal.
fn diagram_bounds(diagrams: &[PersistenceDiagram]) -> ([f64; 2], [f64; 2]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in diagrams.iter().flat_map(|d| d.points()) {
        lo = lo.min(p.birth).min(p.death);
        hi = hi.max(p.birth).max(p.death);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    ([lo - pad, lo - pad], [hi + pad, hi + pad])
}

/// Birth-death scatter of one or more diagrams with the diagonal.
///
/// Degree 0 uses circles, higher degrees use triangles. Essential classes
/// are drawn hollow at their truncation value.
pub fn diagram_svg(diagrams: &[PersistenceDiagram]) -> String {
    let mut out = String::with_capacity(256 + 96 * diagrams.iter().map(|d| d.len()).sum::<usize>());
    header(&mut out, SIZE, SIZE);
    let (lo, hi) = diagram_bounds(diagrams);
    let frame = Frame {
        x0: MARGIN,
        y0: 16.0,
        w: SIZE - MARGIN - 16.0,
        h: SIZE - MARGIN - 16.0,
        lo,
        hi,
    };
    frame.axes(&mut out, "birth", "death");
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        frame.px(lo[0]),
        frame.py(lo[1]),
        frame.px(hi[0]),
        frame.py(hi[1])
    );
    for pd in diagrams {
        let color = COLORS[pd.degree() % COLORS.len()];
        let _ = writeln!(out, r#"<g fill="{color}" stroke="{color}" class="degree-{}">"#, pd.degree());
        for p in pd.points() {
            let (x, y) = (frame.px(p.birth), frame.py(p.death));
            let fill = if p.essential { r#" fill="none""# } else { "" };
            if pd.degree() == 0 {
                let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5"{fill}/>"#);
            } else {
                let _ = writeln!(
                    out,
                    r#"<path d="M{x:.2} {:.2}L{:.2} {:.2}L{:.2} {:.2}Z"{fill}/>"#,
                    y - 3.0,
                    x - 3.0,
                    y + 2.5,
                    x + 3.0,
                    y + 2.5
                );
            }
        }
        let _ = writeln!(out, "</g>");
    }
    let mut degrees: Vec<usize> = diagrams.iter().map(|d| d.degree()).collect();
    degrees.sort_unstable();
    degrees.dedup();
    for (row, d) in degrees.iter().enumerate() {
        let y = 30.0 + 16.0 * row as f64;
        let color = COLORS[d % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{y:.2}" font-size="11" fill="{color}">H{d}</text>"#,
            MARGIN + 12.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One histogram panel per order statistic; the observed value is a red line.
pub fn report_svg(report: &OrderStatReport) -> String {
    const PANEL_W: f64 = 260.0;
    const PANEL_H: f64 = 180.0;
    const BINS: usize = 30;
    let panels = report.rows.len().max(1);
    let cols = panels.min(3);
    let rows = panels.div_ceil(cols);
    let (width, height) = (cols as f64 * PANEL_W, rows as f64 * PANEL_H);
    let mut out = String::new();
    header(&mut out, width, height);
    for (idx, row) in report.rows.iter().enumerate() {
        let values = report.replicate_t.get(idx).map(Vec::as_slice).unwrap_or(&[]);
        let mut lo = values.iter().copied().fold(row.observed, f64::min);
        let mut hi = values.iter().copied().fold(row.observed, f64::max);
        if hi - lo <= 0.0 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let width_bin = (hi - lo) / BINS as f64;
        let mut counts = [0usize; BINS];
        for &v in values {
            counts[(((v - lo) / width_bin) as usize).min(BINS - 1)] += 1;
        }
        let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let frame = Frame {
            x0: (idx % cols) as f64 * PANEL_W + 44.0,
            y0: (idx / cols) as f64 * PANEL_H + 24.0,
            w: PANEL_W - 60.0,
            h: PANEL_H - 70.0,
            lo: [lo, 0.0],
            hi: [hi, top],
        };
        frame.axes(&mut out, &format!("T{}", row.j), "count");
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">j = {}, p = {:.4}</text>"#,
            frame.x0 + frame.w / 2.0,
            frame.y0 - 8.0,
            row.j,
            row.p_value
        );
        let _ = writeln!(out, r##"<g fill="#9ecae1" stroke="#3182bd" stroke-width="0.5">"##);
        for (b, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x = frame.px(lo + b as f64 * width_bin);
            let y = frame.py(c as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
                frame.w / BINS as f64,
                frame.py(0.0) - y
            );
        }
        let _ = writeln!(out, "</g>");
        let ox = frame.px(row.observed);
        let _ = writeln!(
            out,
            r##"<line x1="{ox:.2}" y1="{:.2}" x2="{ox:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2" class="observed"/>"##,
            frame.y0,
            frame.y0 + frame.h
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::PersistencePoint;
    use crate::inference::order_stat_test;
    use std::time::Instant;

    /// Tag balance of a markup string without attributes containing `<` or `>`.
    fn well_formed(svg: &str) -> bool {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg;
        while let Some(open) = rest.find('<') {
            let Some(close) = rest[open..].find('>') else {
                return false;
            };
            let tag = &rest[open + 1..open + close];
            rest = &rest[open + close + 1..];
            if tag.starts_with('?') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                if stack.pop().as_deref() != Some(name.trim()) {
                    return false;
                }
            } else if !tag.ends_with('/') {
                stack.push(tag.split_whitespace().next().unwrap_or("").to_string());
            }
        }
        stack.is_empty()
    }

    #[test]
    fn empty_diagram_has_axes_and_diagonal() {
        let svg = diagram_svg(&[PersistenceDiagram::empty(0)]);
        assert!(well_formed(&svg));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("<path d=\"M"));
        assert!(!svg.contains("<circle"));
    }

    #[test]
    fn degrees_use_distinct_markers() {
        let h0 = PersistenceDiagram::new(0, [PersistencePoint::finite(0, 0.0, 1.0), PersistencePoint::essential(0, -1.0, 2.0)]).unwrap();
        let h1 = PersistenceDiagram::from_pairs(1, &[(0.2, 0.5)]).unwrap();
        let svg = diagram_svg(&[h0, h1]);
        assert!(well_formed(&svg));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("fill=\"none\"/>").count(), 1);
        assert!(svg.contains("class=\"degree-1\""));
        assert!(svg.contains(">H1<"));
    }

    #[test]
    fn large_diagram_renders_quickly() {
        let pairs: Vec<(f64, f64)> = (0..27_000)
            .map(|i| {
                let b = (i as f64 * 0.618).sin();
                (b, b + 0.5 + 0.5 * (i as f64 * 0.37).cos())
            })
            .collect();
        let pd = PersistenceDiagram::from_pairs(0, &pairs).unwrap();
        let t = Instant::now();
        let svg = diagram_svg(&[pd]);
        assert!(t.elapsed().as_secs_f64() < 2.0);
        assert_eq!(svg.matches("<circle").count(), 27_000);
        assert!(well_formed(&svg));
    }

    #[test]
    fn report_marks_observed_values() {
        let pd = PersistenceDiagram::from_pairs(0, &[(0.0, 3.0), (0.0, 2.0)]).unwrap();
        let reps: Vec<PersistenceDiagram> = (0..20)
            .map(|i| PersistenceDiagram::from_pairs(0, &[(0.0, 1.0 + 0.1 * i as f64), (0.0, 0.5)]).unwrap())
            .collect();
        let report = order_stat_test(&pd, &reps, 2).unwrap();
        let svg = report_svg(&report);
        assert!(well_formed(&svg));
        assert_eq!(svg.matches("class=\"observed\"").count(), 2);
        assert!(svg.contains("p = 0.0476"));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let err = emit_svg(Figure::Diagrams(&[]), Path::new("/nonexistent-dir/x.svg")).unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
    }
}
