//! Minimal SVG charts: axes, ticks, series and a legend.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = padded(xs);
        let (y0, y1) = padded(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn padded(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (xa, xb, ya, yb) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = write!(out, r#"<path d="M{xa} {ya}V{yb}H{xb}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = write!(
            out,
            r#"<line x1="{px:.1}" y1="{yb}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            yb + 5.0,
            yb + 18.0,
            tick(xv)
        );
        let _ = write!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{xa}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            xa - 5.0,
            xa - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (xa + xb) / 2.0,
        H - 12.0,
        esc(x_label)
    );
    let _ = write!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (ya + yb) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(0.01..10_000.0).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{}" y="{:.1}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            esc(name)
        );
    }
}

/// Polylines with point markers; a zero reference line when zero is in range.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let f = Frame::fit(pts().map(|p| p.0), pts().map(|p| p.1).chain(std::iter::once(0.0)));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label);
    if f.y0 < 0.0 && f.y1 > 0.0 {
        let y = f.py(0.0);
        let _ = write!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            W - RIGHT
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.join(" ")
        );
        for p in &d {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = write!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Overlaid histograms sharing bin `edges` (length = counts + 1), drawn as
/// translucent bars of per-group density.
pub fn histogram(title: &str, x_label: &str, edges: &[f64], groups: &[(String, Vec<usize>)]) -> String {
    let dens: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, c)| {
            let total: usize = c.iter().sum();
            c.iter().map(|&k| if total == 0 { 0.0 } else { k as f64 / total as f64 }).collect()
        })
        .collect();
    let f = Frame::fit(
        edges.iter().copied(),
        dens.iter().flatten().copied().chain(std::iter::once(0.0)),
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, "share of group");
    for (i, d) in dens.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (b, &v) in d.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (xa, xb) = (f.px(edges[b]), f.px(edges[b + 1]));
            let (ya, yb) = (f.py(v), f.py(0.0));
            let _ = write!(
                out,
                r#"<rect x="{xa:.1}" y="{ya:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.45"/>"#,
                xb - xa,
                yb - ya
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    /// Palette index.
    pub group: usize,
}

/// Point estimates with interval whiskers, one row per estimate, and a zero line.
pub fn forest(title: &str, x_label: &str, rows: &[ForestRow], legend_names: &[&str]) -> String {
    let xs = rows.iter().flat_map(|r| [r.low, r.high, r.estimate]).chain(std::iter::once(0.0));
    let mut f = Frame::fit(xs, std::iter::once(0.0));
    f.y0 = 0.0;
    f.y1 = rows.len().max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    let (xa, xb, yb) = (LEFT + 90.0, W - RIGHT, H - BOTTOM);
    let px = |x: f64| xa + (x - f.x0) / (f.x1 - f.x0) * (xb - xa);
    let _ = write!(out, r#"<path d="M{xa} {TOP}V{yb}H{xb}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = f.x0 + i as f64 / 4.0 * (f.x1 - f.x0);
        let _ = write!(
            out,
            r#"<line x1="{0:.1}" y1="{yb}" x2="{0:.1}" y2="{1:.1}" stroke="black"/><text x="{0:.1}" y="{2:.1}" text-anchor="middle">{3}</text>"#,
            px(v),
            yb + 5.0,
            yb + 18.0,
            tick(v)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (xa + xb) / 2.0,
        H - 12.0,
        esc(x_label)
    );
    let zero = px(0.0);
    let _ = write!(
        out,
        r##"<line x1="{zero:.1}" y1="{TOP}" x2="{zero:.1}" y2="{yb}" stroke="#999" stroke-dasharray="4 3"/>"##
    );
    let step = (yb - TOP) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + step * (i as f64 + 0.5);
        let color = PALETTE[r.group % PALETTE.len()];
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            xa - 6.0,
            y + 4.0,
            esc(&r.label)
        );
        let _ = write!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><circle cx="{:.1}" cy="{y:.1}" r="4" fill="{color}"/>"#,
            px(r.low),
            px(r.high),
            px(r.estimate)
        );
    }
    legend(&mut out, legend_names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed_and_deterministic() {
        let s = vec![Series {
            name: "a<b".into(),
            points: vec![(0.0, -1.0), (1.0, 0.5), (2.0, f64::NAN)],
        }];
        let a = line_chart("t", "x", "y", &s);
        assert_eq!(a, line_chart("t", "x", "y", &s));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<circle").count(), 2);
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let h = histogram("h", "x", &[0.5, 0.5], &[("g".into(), vec![3])]);
        assert!(!h.contains("NaN") && !h.contains("inf"));
        let f = forest("f", "x", &[], &[]);
        assert!(!f.contains("NaN"));
    }
}
