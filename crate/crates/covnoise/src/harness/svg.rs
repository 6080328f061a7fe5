//! Minimal standalone SVG 1.1 line/trajectory plots. Output is fully
//! deterministic: fixed palette, fixed tick logic, fixed float formatting.

use std::path::Path;

use crate::error::{Error, Result};
use crate::quadratic::QuadraticProblem;

/// A named sequence of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

/// Plot style.
pub enum PlotKind {
    /// x-y line chart; `log_y` plots log10 of the y values with decade ticks.
    Line { log_y: bool },
    /// Parameter paths over the loss contours of a 2-D quadratic.
    Trajectory2d { problem: QuadraticProblem },
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn fmt(x: f64) -> String {
    format!("{x:.3}")
}

fn tick_label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-3..1e4).contains(&a) {
        format!("{x:.3}")
    } else {
        format!("{x:.2e}")
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for &(x, y) in points {
            if x.is_finite() && y.is_finite() {
                f.x_min = f.x_min.min(x);
                f.x_max = f.x_max.max(x);
                f.y_min = f.y_min.min(y);
                f.y_max = f.y_max.max(y);
            }
        }
        if !f.x_min.is_finite() {
            f = Frame {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            };
        }
        if f.x_max == f.x_min {
            f.x_max += 1.0;
            f.x_min -= 1.0;
        }
        if f.y_max == f.y_min {
            f.y_max += 1.0;
            f.y_min -= 1.0;
        }
        f
    }

    fn pad(mut self, frac: f64) -> Self {
        let dx = (self.x_max - self.x_min) * frac;
        let dy = (self.y_max - self.y_min) * frac;
        self.x_min -= dx;
        self.x_max += dx;
        self.y_min -= dy;
        self.y_max += dy;
        self
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn linear_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn axes_svg(out: &mut String, frame: &Frame, log_y: bool, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt(x0),
        fmt(y1),
        fmt(x1 - x0),
        fmt(y0 - y1)
    ));
    for t in linear_ticks(frame.x_min, frame.x_max, 6) {
        let sx = frame.sx(t);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\"/>\n",
            fmt(sx),
            fmt(y0),
            fmt(y0 + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            fmt(sx),
            fmt(y0 + 18.0),
            tick_label(t)
        ));
    }
    for t in linear_ticks(frame.y_min, frame.y_max, 6) {
        let sy = frame.sy(t);
        let label = if log_y {
            format!("1e{}", tick_label(t))
        } else {
            tick_label(t)
        };
        out.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#333333\"/>\n",
            fmt(sy),
            fmt(x0 - 5.0),
            fmt(x0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 8.0),
            fmt(sy + 4.0),
            label
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 12.0),
        x_label
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt((y0 + y1) / 2.0),
        fmt((y0 + y1) / 2.0),
        y_label
    ));
}

fn legend_svg(out: &mut String, labels: &[&str]) {
    let x = WIDTH - MARGIN_R - 170.0;
    let mut y = MARGIN_T + 14.0;
    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            fmt(x),
            fmt(y - 4.0),
            fmt(x + 24.0),
            fmt(y - 4.0),
            color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            fmt(x + 30.0),
            fmt(y),
            escape(label)
        ));
        y += 16.0;
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, width: f64) {
    let coords: Vec<String> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{},{}", fmt(frame.sx(x)), fmt(frame.sy(y))))
        .collect();
    if coords.is_empty() {
        return;
    }
    if coords.len() == 1 {
        let (sx, sy) = {
            let p = points
                .iter()
                .find(|(x, y)| x.is_finite() && y.is_finite())
                .unwrap();
            (frame.sx(p.0), frame.sy(p.1))
        };
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
            fmt(sx),
            fmt(sy),
            color
        ));
        return;
    }
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
        coords.join(" "),
        color,
        fmt(width)
    ));
}

/// Contour of 1/2 theta^T A theta = level as a sampled ellipse.
fn contour_points(problem: &QuadraticProblem, level: f64, samples: usize) -> Vec<(f64, f64)> {
    let spec = problem.spectrum();
    let (l1, l2) = (spec.eigenvalues()[0], spec.eigenvalues()[1]);
    let p = spec.eigenvectors();
    let (r1, r2) = ((2.0 * level / l1).sqrt(), (2.0 * level / l2).sqrt());
    (0..=samples)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
            let u = r1 * phi.cos();
            let v = r2 * phi.sin();
            (
                p[(0, 0)] * u + p[(0, 1)] * v,
                p[(1, 0)] * u + p[(1, 1)] * v,
            )
        })
        .collect()
}

/// Render the series to a standalone SVG file.
pub fn emit_svg(series: &[Series], kind: &PlotKind, path: &Path) -> Result<()> {
    emit_svg_labeled(series, kind, "x", "y", path)
}

/// Render with explicit axis labels.
pub fn emit_svg_labeled(
    series: &[Series],
    kind: &PlotKind,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptySeries);
    }
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    match kind {
        PlotKind::Line { log_y } => {
            let transformed: Vec<Series> = if *log_y {
                series
                    .iter()
                    .map(|s| Series {
                        label: s.label.clone(),
                        points: s
                            .points
                            .iter()
                            .filter(|(_, y)| *y > 0.0)
                            .map(|&(x, y)| (x, y.log10()))
                            .collect(),
                    })
                    .collect()
            } else {
                series.to_vec()
            };
            let frame = Frame::from_points(transformed.iter().flat_map(|s| s.points.iter())).pad(0.03);
            axes_svg(&mut out, &frame, *log_y, x_label, y_label);
            for (i, s) in transformed.iter().enumerate() {
                polyline(&mut out, &frame, &s.points, PALETTE[i % PALETTE.len()], 1.6);
            }
            let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
            legend_svg(&mut out, &labels);
        }
        PlotKind::Trajectory2d { problem } => {
            if problem.dim() != 2 {
                return Err(Error::DimMismatch {
                    expected: 2,
                    got: problem.dim(),
                });
            }
            let path_frame = Frame::from_points(series.iter().flat_map(|s| s.points.iter()));
            // square-ish frame around paths and origin
            let reach = [
                path_frame.x_min.abs(),
                path_frame.x_max.abs(),
                path_frame.y_min.abs(),
                path_frame.y_max.abs(),
            ]
            .into_iter()
            .fold(0.5f64, f64::max)
                * 1.15;
            let frame = Frame {
                x_min: -reach,
                x_max: reach,
                y_min: -reach,
                y_max: reach,
            };
            axes_svg(&mut out, &frame, false, x_label, y_label);
            // contour levels from the largest starting loss down
            let max_loss = series
                .iter()
                .flat_map(|s| s.points.iter())
                .map(|&(x, y)| {
                    let theta = nalgebra::DVector::from_vec(vec![x, y]);
                    problem.loss(&theta).unwrap_or(0.0)
                })
                .fold(0.0f64, f64::max)
                .max(1e-12);
            for i in 1..=5 {
                let level = max_loss * i as f64 / 5.0;
                let pts = contour_points(problem, level, 128);
                polyline(&mut out, &frame, &pts, "#bbbbbb", 1.0);
            }
            for (i, s) in series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                polyline(&mut out, &frame, &s.points, color, 1.6);
                if let Some(&(x, y)) = s.points.first() {
                    out.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"#1f4fff\"/>\n",
                        fmt(frame.sx(x)),
                        fmt(frame.sy(y))
                    ));
                }
                if let Some(&(x, y)) = s.points.last() {
                    out.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"#2ca02c\"/>\n",
                        fmt(frame.sx(x)),
                        fmt(frame.sy(y))
                    ));
                }
            }
            let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
            legend_svg(&mut out, &labels);
        }
    }
    out.push_str("</svg>\n");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn single_point_series_is_valid_marker() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.svg");
        emit_svg(
            &[Series::new("pt", vec![(1.0, 2.0)])],
            &PlotKind::Line { log_y: false },
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("<circle"));
        assert!(text.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn two_series_two_legend_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.svg");
        emit_svg(
            &[
                Series::new("alpha", vec![(0.0, 1.0), (1.0, 2.0)]),
                Series::new("beta", vec![(0.0, 2.0), (1.0, 1.0)]),
            ],
            &PlotKind::Line { log_y: false },
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(">alpha</text>"));
        assert!(text.contains(">beta</text>"));
    }

    #[test]
    fn empty_series_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.svg");
        assert!(matches!(
            emit_svg(&[], &PlotKind::Line { log_y: false }, &path),
            Err(Error::EmptySeries)
        ));
    }

    #[test]
    fn trajectory_contours_are_tilted_ellipses() {
        let problem =
            QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        // eigenvectors of [[2,1],[1,2]] are the diagonals: contour extremes
        // along (1,1)/(1,-1)
        let pts = contour_points(&problem, 1.0, 64);
        let max_pt = pts
            .iter()
            .cloned()
            .max_by(|a, b| {
                (a.0 * a.0 + a.1 * a.1)
                    .partial_cmp(&(b.0 * b.0 + b.1 * b.1))
                    .unwrap()
            })
            .unwrap();
        let angle = max_pt.1.atan2(max_pt.0).abs();
        // the long axis lies along the lambda_min eigenvector (1,-1): +-45 degrees
        assert!(
            (angle - std::f64::consts::FRAC_PI_4).abs() < 0.05
                || (angle - 3.0 * std::f64::consts::FRAC_PI_4).abs() < 0.05,
            "angle {angle}"
        );
        // all contour points sit on the level set
        for &(x, y) in &pts {
            let theta = nalgebra::DVector::from_vec(vec![x, y]);
            assert!((problem.loss(&theta).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_y_drops_nonpositive_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.svg");
        emit_svg(
            &[Series::new("loss", vec![(0.0, 1.0), (1.0, 0.0), (2.0, 0.01)])],
            &PlotKind::Line { log_y: true },
            &path,
        )
        .unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("polyline"));
    }
}
