//! Hand-written SVG: tube snapshots and time-series charts.

use std::fmt::Write as _;

use super::tables::{MetricsRow, TraceRow};
use crate::tube::VirtualTube;
use crate::Vec2;

/// World-to-pixel map with y pointing up in the world and down on screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub min: Vec2,
    pub max: Vec2,
    /// Pixels per metre.
    pub scale: f64,
    pub margin: f64,
}

impl Viewport {
    /// Fits the tube boundary into `width_px` (plus margins).
    pub fn fit(tube: &VirtualTube, width_px: f64) -> Self {
        let (lower, upper) = tube.boundary_polylines();
        let mut min = Vec2::repeat(f64::INFINITY);
        let mut max = Vec2::repeat(f64::NEG_INFINITY);
        for (_, p) in lower.iter().chain(upper) {
            min = min.inf(p);
            max = max.sup(p);
        }
        let span = (max - min).x.max((max - min).y).max(1e-9);
        Viewport {
            min,
            max,
            scale: width_px / span,
            margin: 20.0,
        }
    }

    pub fn to_svg(&self, p: Vec2) -> (f64, f64) {
        (
            self.margin + (p.x - self.min.x) * self.scale,
            self.margin + (self.max.y - p.y) * self.scale,
        )
    }

    pub fn to_world(&self, x: f64, y: f64) -> Vec2 {
        Vec2::new(
            self.min.x + (x - self.margin) / self.scale,
            self.max.y - (y - self.margin) / self.scale,
        )
    }

    pub fn width(&self) -> f64 {
        2.0 * self.margin + (self.max.x - self.min.x) * self.scale
    }

    pub fn height(&self) -> f64 {
        2.0 * self.margin + (self.max.y - self.min.y) * self.scale
    }
}

fn polyline(out: &mut String, class: &str, pts: impl Iterator<Item = (f64, f64)>) {
    let _ = write!(out, r#"<polyline class="{class}" fill="none" points=""#);
    for (k, (x, y)) in pts.enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.3},{y:.3}");
    }
    out.push_str("\"/>\n");
}

/// Tube outline, active robots as discs of radius `r_s` and velocity arrows.
///
/// Disc centres are written at full precision so they can be mapped back
/// through [`Viewport::to_world`].
pub fn snapshot(tube: &VirtualTube, vp: &Viewport, frame: &[TraceRow], r_s: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}">"#,
        vp.width(),
        vp.height()
    );
    s.push_str(
        "<style>.wall{stroke:#333;stroke-width:1.5}.centre{stroke:#999;stroke-dasharray:4 3}\
         .robot{fill:#f4a259;fill-opacity:0.6;stroke:#8c4a12}.vel{stroke:#1f5fbf;stroke-width:1.5}</style>\n",
    );
    s.push_str(r##"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#1f5fbf"/></marker></defs>"##);
    s.push('\n');
    let (lower, upper) = tube.boundary_polylines();
    polyline(&mut s, "wall", lower.iter().map(|(_, p)| vp.to_svg(*p)));
    polyline(&mut s, "wall", upper.iter().map(|(_, p)| vp.to_svg(*p)));
    polyline(
        &mut s,
        "centre",
        tube.curve().samples().iter().map(|smp| vp.to_svg(smp.point)),
    );
    if let Some(t) = frame.first().map(|r| r.t) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="14" font-size="12">t = {t:.2} s</text>"#, vp.margin);
    }
    for r in frame.iter().filter(|r| r.active != 0) {
        let p = Vec2::new(r.x, r.y);
        let (cx, cy) = vp.to_svg(p);
        let _ = writeln!(
            s,
            r#"<circle class="robot" data-id="{}" cx="{cx}" cy="{cy}" r="{}"/>"#,
            r.robot_id,
            r_s * vp.scale
        );
        let v = Vec2::new(r.vx, r.vy);
        if v.norm() > 0.0 {
            // one second of travel
            let (hx, hy) = vp.to_svg(p + v);
            let _ = writeln!(
                s,
                r#"<line class="vel" x1="{cx:.3}" y1="{cy:.3}" x2="{hx:.3}" y2="{hy:.3}" marker-end="url(#head)"/>"#
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// `(id, cx, cy, r)` of every robot disc in a snapshot.
pub fn parse_robot_discs(svg: &str) -> Vec<(usize, f64, f64, f64)> {
    fn attr(tag: &str, name: &str) -> Option<String> {
        let key = format!(" {name}=\"");
        let start = tag.find(&key)? + key.len();
        let end = tag[start..].find('"')? + start;
        Some(tag[start..end].to_string())
    }
    svg.lines()
        .filter(|l| l.trim_start().starts_with(r#"<circle class="robot""#))
        .filter_map(|tag| {
            Some((
                attr(tag, "data-id")?.parse().ok()?,
                attr(tag, "cx")?.parse().ok()?,
                attr(tag, "cy")?.parse().ok()?,
                attr(tag, "r")?.parse().ok()?,
            ))
        })
        .collect()
}

pub struct Series<'a> {
    pub label: &'a str,
    pub colour: &'a str,
    /// Gaps (`None`) split the line.
    pub points: Vec<(f64, Option<f64>)>,
}

/// Line chart with optional dashed horizontal reference levels.
pub fn chart(title: &str, y_label: &str, series: &[Series<'_>], references: &[(&str, f64)]) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 360.0, 70.0, 150.0, 30.0, 45.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|p| p.1))
        .chain(references.iter().map(|r| r.1));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.1}</text>"#,
            px(fx),
            top + ph + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t (s)</text>"#,
        left + pw / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        top + ph / 2.0
    );
    for (k, (label, y)) in references.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{left}" x2="{:.1}" y1="{:.3}" y2="{:.3}" stroke="#c0392b" stroke-dasharray="6 4"/>"##,
            left + pw,
            py(*y),
            py(*y)
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" fill="#c0392b">{label}</text>"##,
            left + pw + 8.0,
            top + ph - 16.0 * k as f64
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, s: &mut String| {
            if !run.is_empty() {
                let _ = write!(s, r#"<polyline class="series" fill="none" stroke="{}" points=""#, ser.colour);
                for (j, (x, y)) in run.iter().enumerate() {
                    if j > 0 {
                        s.push(' ');
                    }
                    let _ = write!(s, "{x:.2},{y:.2}");
                }
                s.push_str("\"/>\n");
                run.clear();
            }
        };
        for &(x, y) in &ser.points {
            match y {
                Some(y) => run.push((px(x), py(y))),
                None => flush(&mut run, &mut s),
            }
        }
        flush(&mut run, &mut s);
        let ly = top + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw + 8.0,
            left + pw + 28.0,
            ser.colour,
            left + pw + 32.0,
            ly + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(y: f64) -> String {
    if y != 0.0 && (y.abs() < 1e-2 || y.abs() >= 1e4) {
        format!("{y:.2e}")
    } else {
        format!("{y:.3}")
    }
}

pub fn distances(metrics: &[MetricsRow], r_s: f64) -> String {
    chart(
        "Minimum distances",
        "distance (m)",
        &[
            Series {
                label: "robot-robot",
                colour: "#1f5fbf",
                points: metrics.iter().map(|m| (m.t, m.min_pair_dist)).collect(),
            },
            Series {
                label: "robot-boundary",
                colour: "#2e8b57",
                points: metrics.iter().map(|m| (m.t, m.min_bound_dist)).collect(),
            },
        ],
        &[("2 r_s", 2.0 * r_s), ("r_s", r_s)],
    )
}

pub fn density_error(metrics: &[MetricsRow]) -> String {
    chart(
        "Density tracking error",
        "L2 error (1/m)",
        &[Series {
            label: "||rho_hat - rho_d||",
            colour: "#8e44ad",
            points: metrics.iter().map(|m| (m.t, m.density_err_l2)).collect(),
        }],
        &[],
    )
}

pub fn amd_comparison(full: &[MetricsRow], baseline: &[MetricsRow]) -> String {
    chart(
        "Average minimum distance",
        "AMD (m)",
        &[
            Series {
                label: "full",
                colour: "#1f5fbf",
                points: full.iter().map(|m| (m.t, m.amd)).collect(),
            },
            Series {
                label: "baseline",
                colour: "#d35400",
                points: baseline.iter().map(|m| (m.t, m.amd)).collect(),
            },
        ],
        &[],
    )
}
