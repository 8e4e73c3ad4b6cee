//! Deterministic SVG rendering of geodesic family portraits.
//!
//! Colors follow the usual convention for these portraits: timelike blue,
//! spacelike red, isotropic yellow; horizontal geodesics and members with
//! non-isotropic admissible directions are dashed. Coordinates are emitted
//! at fixed six-decimal precision and elements in a fixed order, so the
//! same invocation always produces byte-identical output.

use pseudogeo::CurveType;
use std::fmt::Write as _;

pub const COLOR_TIMELIKE: &str = "#2b6cb0";
pub const COLOR_SPACELIKE: &str = "#c0392b";
pub const COLOR_ISOTROPIC: &str = "#e0a800";
pub const COLOR_AXIS: &str = "#888888";
pub const COLOR_PARABOLIC: &str = "#444444";

/// Polyline simplification threshold relative to the window diagonal.
pub const SIMPLIFY_REL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Window {
    pub fn diag(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }
}

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub kind: CurveType,
    pub dashed: bool,
    pub label: String,
}

/// Horizontal reference lines drawn across the window.
#[derive(Debug, Clone)]
pub struct HLine {
    pub y: f64,
    pub dashed: bool,
    pub color: &'static str,
    pub label: String,
}

pub struct Portrait {
    pub window: Window,
    pub curves: Vec<Polyline>,
    pub hlines: Vec<HLine>,
    pub title: String,
}

fn color_of(kind: CurveType) -> &'static str {
    match kind {
        CurveType::Timelike => COLOR_TIMELIKE,
        CurveType::Spacelike => COLOR_SPACELIKE,
        CurveType::Isotropic => COLOR_ISOTROPIC,
        CurveType::Mixed => COLOR_AXIS,
    }
}

/// Ramer-Douglas-Peucker simplification.
fn simplify(points: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    if points.len() <= 2 || tol <= 0.0 {
        return points.to_vec();
    }
    fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return (p.0 - a.0).hypot(p.1 - a.1);
        }
        let t = ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2;
        let t = t.clamp(0.0, 1.0);
        (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
    }
    fn rdp(pts: &[(f64, f64)], tol: f64, out: &mut Vec<(f64, f64)>) {
        if pts.len() < 3 {
            out.extend_from_slice(&pts[..pts.len().saturating_sub(1)]);
            return;
        }
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        let mut worst = 0.0;
        let mut idx = 0;
        for (i, p) in pts.iter().enumerate().skip(1).take(pts.len() - 2) {
            let d = seg_dist(*p, a, b);
            if d > worst {
                worst = d;
                idx = i;
            }
        }
        if worst > tol {
            rdp(&pts[..=idx], tol, out);
            rdp(&pts[idx..], tol, out);
        } else {
            out.push(a);
        }
    }
    let mut out = Vec::new();
    rdp(points, tol, &mut out);
    out.push(*points.last().unwrap());
    out
}

/// Clip a polyline to the window, splitting it into visible segments.
fn clip(points: &[(f64, f64)], w: &Window) -> Vec<Vec<(f64, f64)>> {
    let inside = |p: &(f64, f64)| p.0 >= w.x0 && p.0 <= w.x1 && p.1 >= w.y0 && p.1 <= w.y1;
    let mut segs = Vec::new();
    let mut cur: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if inside(p) && p.0.is_finite() && p.1.is_finite() {
            cur.push(*p);
        } else if !cur.is_empty() {
            if cur.len() > 1 {
                segs.push(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
        }
    }
    if cur.len() > 1 {
        segs.push(cur);
    }
    segs
}

pub fn render(p: &Portrait) -> String {
    const W: f64 = 900.0;
    const H: f64 = 640.0;
    const M: f64 = 46.0; // margin
    let win = &p.window;
    let sx = (W - 2.0 * M) / (win.x1 - win.x0);
    let sy = (H - 2.0 * M) / (win.y1 - win.y0);
    let tx = |x: f64| M + (x - win.x0) * sx;
    let ty = |y: f64| H - M - (y - win.y0) * sy; // flip: SVG y grows downward

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.6}" y="22" font-family="monospace" font-size="14">{}</text>"#,
        M,
        xml_escape(&p.title)
    );

    // frame
    let _ = writeln!(
        s,
        r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="none" stroke="{}" stroke-width="1"/>"#,
        M,
        M,
        W - 2.0 * M,
        H - 2.0 * M,
        COLOR_AXIS
    );

    // axis ticks at window corners
    for (x, y, txt) in [
        (win.x0, win.y0, format!("({:.3}, {:.3})", win.x0, win.y0)),
        (win.x1, win.y1, format!("({:.3}, {:.3})", win.x1, win.y1)),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{:.6}" y="{:.6}" font-family="monospace" font-size="11" fill="{}">{}</text>"#,
            tx(x) - 20.0,
            ty(y) + 14.0,
            COLOR_AXIS,
            txt
        );
    }

    // horizontal reference lines
    for hl in &p.hlines {
        if hl.y < win.y0 || hl.y > win.y1 {
            continue;
        }
        let dash = if hl.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<line x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}" stroke="{}" stroke-width="1"{} />"#,
            tx(win.x0),
            ty(hl.y),
            tx(win.x1),
            ty(hl.y),
            hl.color,
            dash
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.6}" y="{:.6}" font-family="monospace" font-size="10" fill="{}">{}</text>"#,
            tx(win.x1) + 4.0,
            ty(hl.y) + 3.0,
            hl.color,
            xml_escape(&hl.label)
        );
    }

    // curves
    let tol = SIMPLIFY_REL * p.window.diag();
    for c in &p.curves {
        for seg in clip(&c.points, win) {
            let pts = simplify(&seg, tol);
            let mut d = String::new();
            for (i, (x, y)) in pts.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.6},{:.6}",
                    if i == 0 { "M" } else { " L" },
                    tx(*x),
                    ty(*y)
                );
            }
            let dash = if c.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.4"{}><title>{}</title></path>"#,
                d,
                color_of(c.kind),
                dash,
                xml_escape(&c.label)
            );
        }
    }

    // legend
    let legend = [
        (COLOR_TIMELIKE, "timelike"),
        (COLOR_SPACELIKE, "spacelike"),
        (COLOR_ISOTROPIC, "isotropic"),
    ];
    for (i, (color, name)) in legend.iter().enumerate() {
        let y = M + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}" stroke="{}" stroke-width="2"/>"#,
            W - M - 110.0,
            y,
            W - M - 80.0,
            y,
            color
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.6}" y="{:.6}" font-family="monospace" font-size="11">{}</text>"#,
            W - M - 74.0,
            y + 4.0,
            name
        );
    }

    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
