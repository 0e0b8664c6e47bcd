use std::fmt::Write as _;

use super::Histogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

/// Standalone SVG bar chart of the in-range buckets.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let edges = h.spec.edges();
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / h.counts.len() as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = plot_h * c as f64 / max;
        let x = MARGIN + bar_w * i as f64;
        let y = MARGIN + plot_h - bh;
        let fill = if edges[i + 1] <= 0.0 { "#c0504d" } else { "#4f81bd" };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{bh:.2}" fill="{fill}"><title>[{}, {}): {c}</title></rect>"#,
            (bar_w - 1.0).max(0.5),
            edges[i],
            edges[i + 1]
        );
    }
    let axis_y = MARGIN + plot_h;
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{axis_y}" x2="{:.1}" y2="{axis_y}" stroke="black"/>"#,
        MARGIN + plot_w
    );
    let last = *edges.last().expect("edges");
    for (x, label) in [(MARGIN, edges[0]), (MARGIN + plot_w, last)] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
            axis_y + 15.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">under {} / over {}</text>"#,
        WIDTH - MARGIN,
        MARGIN - 6.0,
        h.underflow,
        h.overflow
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
