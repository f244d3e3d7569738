//! Minimal static SVG plots: grouped histograms and 2-D scatter panels.

use std::fmt::Write;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, n_panels: usize, extra_h: f64) {
    let w = n_panels as f64 * (PANEL_W + MARGIN) + MARGIN;
    let h = PANEL_H + 2.0 * MARGIN + extra_h;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

struct Axes {
    x0: f64,
    y0: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Axes {
    fn new(panel: usize, lo: [f64; 2], hi: [f64; 2]) -> Self {
        let widen = |l: f64, h: f64| if h > l { (l, h) } else { (l - 0.5, h + 0.5) };
        let (xl, xh) = widen(lo[0], hi[0]);
        let (yl, yh) = widen(lo[1], hi[1]);
        Axes {
            x0: MARGIN + panel as f64 * (PANEL_W + MARGIN),
            y0: MARGIN,
            lo: [xl, yl],
            hi: [xh, yh],
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * PANEL_W
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * PANEL_H
    }

    fn frame(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, y0) = (self.x0, self.y0);
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 12.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 + PANEL_H + 30.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            x0 - 26.0,
            y0 + PANEL_H / 2.0,
            x0 - 26.0,
            y0 + PANEL_H / 2.0,
            escape(ylabel)
        );
        for (v, anchor) in [(self.lo[0], "start"), (self.hi[0], "end")] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{v:.3}</text>"#,
                self.px(v),
                y0 + PANEL_H + 14.0
            );
        }
        for v in [self.lo[1], self.hi[1]] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
                x0 - 4.0,
                self.py(v) + 4.0
            );
        }
    }
}

/// One panel per `(title, per-group samples)`; values are binned on [0, 1].
pub fn histograms(panels: &[(String, Vec<Vec<f64>>)], group_labels: &[String], bins: usize) -> String {
    let mut out = String::new();
    header(&mut out, panels.len(), 20.0);
    for (p, (title, groups)) in panels.iter().enumerate() {
        let density: Vec<Vec<f64>> = groups
            .iter()
            .map(|vals| {
                let mut h = vec![0.0; bins];
                for v in vals {
                    let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
                    h[b] += 1.0;
                }
                let n = vals.len().max(1) as f64;
                h.into_iter().map(|c| c / n).collect()
            })
            .collect();
        let top = density.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-12);
        let ax = Axes::new(p, [0.0, 0.0], [1.0, top]);
        ax.frame(&mut out, title, "stability", "fraction of instances");
        for (g, h) in density.iter().enumerate() {
            let color = COLORS[g % COLORS.len()];
            for (b, &f) in h.iter().enumerate() {
                if f == 0.0 {
                    continue;
                }
                let x = ax.px(b as f64 / bins as f64);
                let w = ax.px((b + 1) as f64 / bins as f64) - x;
                let y = ax.py(f);
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{color}" fill-opacity="0.45"/>"#,
                    ax.py(0.0) - y
                );
            }
        }
    }
    legend(&mut out, group_labels);
    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String, labels: &[String]) {
    let y = MARGIN + PANEL_H + 50.0;
    for (g, label) in labels.iter().enumerate() {
        let x = MARGIN + g as f64 * 140.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 9.0,
            COLORS[g % COLORS.len()],
            x + 14.0,
            escape(label)
        );
    }
}

/// Scatter panels; each panel is `(title, x label, y label, x index, y index)`
/// into the point arrays. `highlight` points are drawn over `background`.
pub fn scatter_panels(
    panels: &[(&str, &str, &str, usize, usize)],
    highlight: &[[f64; 3]],
    background: &[[f64; 3]],
    labels: [&str; 2],
) -> String {
    let mut out = String::new();
    header(&mut out, panels.len(), 20.0);
    for (p, &(title, xl, yl, xi, yi)) in panels.iter().enumerate() {
        let all = highlight.iter().chain(background);
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for pt in all {
            for (k, i) in [xi, yi].into_iter().enumerate() {
                lo[k] = lo[k].min(pt[i]);
                hi[k] = hi[k].max(pt[i]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let ax = Axes::new(p, lo, hi);
        ax.frame(&mut out, title, xl, yl);
        for (pts, color, r) in [(background, "#bbbbbb", 2.5), (highlight, COLORS[1], 3.5)] {
            for pt in pts {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="{r}" fill="{color}"/>"#,
                    ax.px(pt[xi]),
                    ax.py(pt[yi])
                );
            }
        }
    }
    let y = MARGIN + PANEL_H + 50.0;
    for (k, (label, color)) in labels.iter().zip([COLORS[1], "#bbbbbb"]).enumerate() {
        let x = MARGIN + k as f64 * 160.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            x + 4.0,
            y - 4.0,
            x + 14.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
