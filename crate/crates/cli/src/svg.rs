//! Minimal SVG scatter plots of region-classified labels.

use std::fmt::Write as _;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 44.0;
/// Region 1, 2, 3.
const COLORS: [&str; 3] = ["#2e9e44", "#f0a020", "#d03030"];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// One panel per pair of label coordinates, points colored by region.
pub fn region_scatter(rows: &[Vec<f64>], regions: &[u8], names: &[String]) -> String {
    let d = names.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let width = MARGIN + pairs.len().max(1) as f64 * (PANEL + MARGIN);
    let height = PANEL + 2.0 * MARGIN + 24.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let ranges: Vec<(f64, f64)> = (0..d).map(|k| range(rows.iter().map(|r| r[k]))).collect();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL + MARGIN);
        let y0 = MARGIN;
        writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        let (xl, xh) = ranges[i];
        let (yl, yh) = ranges[j];
        for (k, (lo, hi)) in [(xl, xh), (yl, yh)].into_iter().enumerate() {
            let (a, b) = if k == 0 {
                ((x0, y0 + PANEL + 14.0, "start"), (x0 + PANEL, y0 + PANEL + 14.0, "end"))
            } else {
                ((x0 - 4.0, y0 + PANEL, "end"), (x0 - 4.0, y0 + 10.0, "end"))
            };
            writeln!(s, r#"<text x="{}" y="{}" text-anchor="{}">{lo:.2}</text>"#, a.0, a.1, a.2).unwrap();
            writeln!(s, r#"<text x="{}" y="{}" text-anchor="{}">{hi:.2}</text>"#, b.0, b.1, b.2).unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + PANEL / 2.0,
            y0 + PANEL + 30.0,
            names[i]
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            x0 - 30.0,
            y0 + PANEL / 2.0,
            x0 - 30.0,
            y0 + PANEL / 2.0,
            names[j]
        )
        .unwrap();
        // outer regions last so the sparse ones stay visible
        for region in 1..=3u8 {
            for (row, _) in rows.iter().zip(regions).filter(|(_, &r)| r == region) {
                let cx = x0 + (row[i] - xl) / (xh - xl) * PANEL;
                let cy = y0 + PANEL - (row[j] - yl) / (yh - yl) * PANEL;
                writeln!(
                    s,
                    r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.2" fill="{}" fill-opacity="0.8"/>"#,
                    COLORS[region as usize - 1]
                )
                .unwrap();
            }
        }
    }
    let total = regions.len().max(1) as f64;
    for r in 1..=3u8 {
        let n = regions.iter().filter(|&&x| x == r).count();
        let x = MARGIN + (r as f64 - 1.0) * 150.0;
        let y = height - 10.0;
        writeln!(s, r#"<circle cx="{x}" cy="{}" r="5" fill="{}"/>"#, y - 4.0, COLORS[r as usize - 1]).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{y}">region {r}: {n} ({:.1}%)</text>"#,
            x + 9.0,
            100.0 * n as f64 / total
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
