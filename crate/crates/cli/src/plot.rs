//! Log-log SVG line charts of error-rate curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One named curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads `round` and `error_rate` from a per-round CSV; the series is named
/// after the file stem.
pub fn read_series(path: &Path) -> Result<Series> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Plot(format!("{} is empty", path.display())))?
        .split(',')
        .collect();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Plot(format!("{} has no {name} column", path.display())))
    };
    let (xi, yi) = (column("round")?, column("error_rate")?);
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let cell = |i: usize| -> Result<f64> {
            cells
                .get(i)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| CliError::Plot(format!("{}:{}: bad row", path.display(), n + 2)))
        };
        points.push((cell(xi)?, cell(yi)?));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Series { name, points })
}

/// Maps data coordinates onto the plotting area, log10 on both axes. Axis
/// ranges are widened to whole decades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFrame {
    /// log10 range of x, whole decades.
    pub x_decades: (i32, i32),
    pub y_decades: (i32, i32),
}

fn decades(lo: f64, hi: f64) -> (i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b <= a {
        b = a + 1;
    }
    (a, b)
}

fn positive(points: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64)> + '_ {
    points.iter().copied().filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
}

impl LogLogFrame {
    /// Frame covering every plottable point. Points with a zero or negative
    /// coordinate have no logarithm and are dropped; a series needs at least
    /// two plottable points.
    pub fn fit(series: &[Series]) -> Result<Self> {
        if series.is_empty() {
            return Err(CliError::Plot("nothing to plot".into()));
        }
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for s in series {
            let mut n = 0;
            for (x, y) in positive(&s.points) {
                n += 1;
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
            if n < 2 {
                return Err(CliError::Plot(format!(
                    "series {} has {n} plottable points, need at least 2",
                    s.name
                )));
            }
        }
        Ok(Self {
            x_decades: decades(x_lo, x_hi),
            y_decades: decades(y_lo, y_hi),
        })
    }

    /// Pixel position of a data point (SVG y grows downwards).
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = (f64::from(self.x_decades.0), f64::from(self.x_decades.1));
        let (y0, y1) = (f64::from(self.y_decades.0), f64::from(self.y_decades.1));
        let w = WIDTH - LEFT - RIGHT;
        let h = HEIGHT - TOP - BOTTOM;
        (
            LEFT + (x.log10() - x0) / (x1 - x0) * w,
            TOP + (y1 - y.log10()) / (y1 - y0) * h,
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the series as a standalone SVG document.
pub fn render_svg(series: &[Series]) -> Result<String> {
    let frame = LogLogFrame::fit(series)?;
    let mut svg = String::new();
    let (right, bottom) = (WIDTH - RIGHT, HEIGHT - BOTTOM);
    // Writing to a String cannot fail.
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - LEFT,
        bottom - TOP
    );
    for e in frame.x_decades.0..=frame.x_decades.1 {
        let (px, _) = frame.to_pixel(10f64.powi(e), 1.0);
        let _ = writeln!(
            svg,
            r##"<line class="xtick" x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">1e{e}</text>"##,
            bottom + 5.0,
            bottom + 20.0
        );
    }
    for e in frame.y_decades.0..=frame.y_decades.1 {
        let (_, py) = frame.to_pixel(1.0, 10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line class="ytick" x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">round</text>"#,
        (LEFT + right) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">error rate</text>"#,
        (TOP + bottom) / 2.0,
        (TOP + bottom) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pixels: Vec<(f64, f64)> = positive(&s.points).map(|(x, y)| frame.to_pixel(x, y)).collect();
        let mut kept: Vec<(f64, f64)> = Vec::new();
        for (j, &(px, py)) in pixels.iter().enumerate() {
            let last = j + 1 == pixels.len();
            match kept.last() {
                Some(&(qx, qy)) if !last && (px - qx).abs() < 0.5 && (py - qy).abs() < 0.5 => {}
                _ => kept.push((px, py)),
            }
        }
        let coords: Vec<String> = kept.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(&s.name)
        );
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            right + 10.0,
            right + 30.0,
            right + 35.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads per-round CSVs and writes their error-rate curves to `out`.
pub fn emit_plot(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let series = inputs.iter().map(|p| read_series(p)).collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&series)?;
    fs::write(out, svg).map_err(|e| CliError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            name: name.into(),
            points,
        }
    }

    #[test]
    fn frame_widens_to_decades() {
        let f = LogLogFrame::fit(&[series("a", vec![(3.0, 0.02), (500.0, 0.08)])]).unwrap();
        assert_eq!(f.x_decades, (0, 3));
        assert_eq!(f.y_decades, (-2, -1));
        let (px, py) = f.to_pixel(1.0, 0.1);
        assert_eq!((px, py), (LEFT, TOP));
    }

    #[test]
    fn degenerate_series_are_rejected() {
        assert!(render_svg(&[]).is_err());
        assert!(render_svg(&[series("one", vec![(1.0, 0.5)])]).is_err());
        assert!(render_svg(&[series("zeros", vec![(1.0, 0.0), (2.0, 0.0)])]).is_err());
    }

    #[test]
    fn legend_escapes_names() {
        let svg = render_svg(&[series("a<b", vec![(1.0, 0.5), (10.0, 0.1)])]).unwrap();
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("<image"));
    }
}
