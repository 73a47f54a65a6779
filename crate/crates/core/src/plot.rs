//! Minimal static SVG charts: line charts and histograms.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

/// A named series for [`line_chart`].
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, y_lo: f64, y_hi: f64) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r##"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="#333" fill="none"/>"##
    );
    for (y, label) in [(y0, y_lo), (y1, y_hi)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            y + 3.0,
            format_tick(label)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline per series over a shared y range; points are spaced evenly.
pub fn line_chart(title: &str, series: &[Series<'_>]) -> String {
    let (lo, hi) = bounds(series.iter().flat_map(|s| s.values.iter()));
    let longest = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, lo, hi);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let step = if longest > 1 {
            plot_w / (longest - 1) as f64
        } else {
            0.0
        };
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = MARGIN + i as f64 * step;
                let y = HEIGHT - MARGIN - (v - lo) / (hi - lo) * plot_h;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 140.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Default bin count: `⌈√n⌉`, at least one.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// Bin counts over `[min, max]`, the last bin closed on the right.
pub fn histogram_counts(values: &[f64], bins: usize) -> (Vec<usize>, f64, f64) {
    let (lo, hi) = bounds(values.iter());
    let mut counts = vec![0usize; bins.max(1)];
    let width = (hi - lo) / counts.len() as f64;
    for v in values.iter().filter(|v| v.is_finite()) {
        let k = (((v - lo) / width).floor() as usize).min(counts.len() - 1);
        counts[k] += 1;
    }
    (counts, lo, hi)
}

/// Histogram with one `<rect>` per bin.
pub fn histogram(title: &str, values: &[f64], bins: Option<usize>) -> String {
    let bins = bins.unwrap_or_else(|| default_bins(values.len()));
    let (counts, lo, hi) = histogram_counts(values, bins);
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / counts.len() as f64;
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, 0.0, max_count);
    for (k, &c) in counts.iter().enumerate() {
        let h = c as f64 / max_count * plot_h;
        let _ = writeln!(
            out,
            r##"<rect class="bin" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
            MARGIN + k as f64 * bar_w,
            HEIGHT - MARGIN - h,
            bar_w,
            h
        );
    }
    for (x, v) in [(MARGIN, lo), (WIDTH - MARGIN, hi)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 14.0,
            format_tick(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_has_one_point_per_value() {
        let svg = line_chart(
            "equity",
            &[Series {
                name: "equity",
                values: &[1.0, 2.0, 1.5, 3.0],
            }],
        );
        assert_eq!(svg.matches("<polyline").count(), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 4);
    }

    #[test]
    fn histogram_uses_sqrt_bins() {
        let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let svg = histogram("returns", &values, None);
        assert_eq!(svg.matches("class=\"bin\"").count(), 8);
        let (counts, _, _) = histogram_counts(&values, 8);
        assert_eq!(counts.iter().sum::<usize>(), 50);
    }

    #[test]
    fn constant_values_do_not_divide_by_zero() {
        let svg = line_chart("flat", &[Series { name: "x", values: &[2.0, 2.0] }]);
        assert!(!svg.contains("NaN"));
        let svg = histogram("flat", &[2.0, 2.0, 2.0], None);
        assert!(!svg.contains("NaN"));
    }
}
