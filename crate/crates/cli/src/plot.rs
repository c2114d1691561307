//! Static SVG scatter plots of two-column embeddings.

use std::fmt::Write;

use rsodc::Matrix;

/// Ten categorical colors; cluster `l` uses entry `(l - 1) % 10`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Scatter of column 0 against column 1 (or against zero when there is only
/// one column), colored by cluster label.
pub fn scatter_svg(points: &Matrix, labels: &[usize], title: &str) -> String {
    let n = points.nrows();
    let x: Vec<f64> = (0..n).map(|i| points[(i, 0)]).collect();
    let y: Vec<f64> = (0..n).map(|i| if points.ncols() > 1 { points[(i, 1)] } else { 0.0 }).collect();
    let (x0, x1) = range(x.iter().copied());
    let (y0, y1) = range(y.iter().copied());
    let span = SIZE - 2.0 * MARGIN;
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * span;
    let sy = |v: f64| SIZE - MARGIN - (v - y0) / (y1 - y0) * span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    let (bx, by) = (MARGIN, SIZE - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{bx}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="black"/>"#
    );
    for (v, anchor_x, anchor_y, align) in [
        (x0, sx(x0), by + 16.0, "start"),
        (x1, sx(x1), by + 16.0, "end"),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{anchor_x:.2}" y="{anchor_y:.2}" text-anchor="{align}" font-family="sans-serif" font-size="10">{v:.3}</text>"#
        );
    }
    for (v, py) in [(y0, sy(y0)), (y1, sy(y1) + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{py:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
            bx - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">component 1</text>"#,
        SIZE / 2.0,
        SIZE - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {0})">component 2</text>"#,
        SIZE / 2.0
    );
    for i in 0..n {
        let color = PALETTE[(labels[i].max(1) - 1) % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" fill-opacity="0.85"/>"#,
            sx(x[i]),
            sy(y[i])
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_points_and_axis_labels() {
        let m = Matrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 2.0]);
        let svg = scatter_svg(&m, &[1, 2, 11], "t <1>");
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("component 1") && svg.contains("component 2"));
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains("t &lt;1&gt;"));
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let m = Matrix::zeros(4, 1);
        let svg = scatter_svg(&m, &[1, 1, 2, 2], "flat");
        assert!(!svg.contains("NaN"));
    }
}
