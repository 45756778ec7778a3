// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal static SVG rendering of already-computed tables.

use std::fmt::Write;

/// Blue for negative, red for positive, white at zero; `v` is clamped to ±1.
fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
    if t >= 0.0 {
        format!("rgb(255,{},{})", fade(t), fade(t))
    } else {
        format!("rgb({},{},255)", fade(-t), fade(-t))
    }
}

/// Grid of cells: rows top to bottom, columns left to right. `None` cells
/// are left blank.
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let (cw, ch, left, top) = (28.0, 20.0, 60.0, 40.0);
    let w = left + cw * col_labels.len() as f64 + 20.0;
    let h = top + ch * row_labels.len() as f64 + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="16" font-size="12">{}</text>"#, escape(title));
    for (c, l) in col_labels.iter().enumerate() {
        let x = left + cw * (c as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            top - 6.0,
            escape(l)
        );
    }
    for (r, l) in row_labels.iter().enumerate() {
        let y = top + ch * r as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 14.0,
            escape(l)
        );
        for (c, v) in cells[r].iter().enumerate() {
            let x = left + cw * c as f64;
            let fill = v.map_or("none".to_string(), diverging);
            let _ = write!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#ccc">"##
            );
            if let Some(v) = v {
                let _ = write!(s, "<title>{v:.4}</title>");
            }
            let _ = writeln!(s, "</rect>");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of `(x, y)` series with y in [0, 1].
pub fn lines(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];
    let (w, h, left, top, pw, ph) = (520.0, 320.0, 50.0, 30.0, 440.0, 240.0);
    let xmax = series
        .iter()
        .flat_map(|s| s.1.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let px = |x: f64| left + pw * x / xmax;
    let py = |y: f64| top + ph * (1.0 - y.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="16" font-size="12">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#,
            left - 4.0,
            py(t) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 8.0,
        escape(x_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + pw + 4.0 - 80.0,
            top + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
