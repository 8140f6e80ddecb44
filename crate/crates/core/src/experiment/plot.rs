//! SVG rendering of experiment CSVs. Plots are a view over the CSV data and
//! carry no information the CSVs lack.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};

/// One labelled polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points: points.into_iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect(),
        }
    }
}

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<PathBuf> {
    let e = plot_err(path);
    let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    {
        let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(&e)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(&e)?;
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(&e)?;
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(&e)?
                .label(s.name.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(&e)?;
        }
        if series.len() > 1 {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(&e)?;
        }
        root.present().map_err(&e)?;
    }
    Ok(path.to_path_buf())
}

/// Heatmap of `values[iy * nx + ix]` over `[x0, x1] × [y0, y1]`, colored on
/// a log scale when every value is positive.
pub fn heatmap(path: &Path, title: &str, nx: usize, ny: usize, extent: [f64; 4], values: &[f64]) -> Result<PathBuf> {
    if values.len() != nx * ny || values.is_empty() {
        return Err(Error::Dimension(format!("heatmap {nx}x{ny} with {} values", values.len())));
    }
    let e = plot_err(path);
    let log = values.iter().all(|v| *v > 0.0 && v.is_finite());
    let t: Vec<f64> = values.iter().map(|&v| if log { v.log10() } else { v }).collect();
    let (lo, hi) = t.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let [x0, x1, y0, y1] = extent;
    let (dx, dy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
    {
        let root = SVGBackend::new(path, (640, 600)).into_drawing_area();
        root.fill(&WHITE).map_err(&e)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(&e)?;
        chart.configure_mesh().x_desc("x [m]").y_desc("y [m]").disable_mesh().draw().map_err(&e)?;
        let cells = (0..ny).flat_map(|iy| (0..nx).map(move |ix| (ix, iy))).map(|(ix, iy)| {
            let v = t[iy * nx + ix];
            let f = if hi > lo && v.is_finite() { (v - lo) / (hi - lo) } else { 0.5 };
            let color = HSLColor(0.66 * (1.0 - f), 0.9, 0.5);
            let (cx, cy) = (x0 + ix as f64 * dx, y0 + iy as f64 * dy);
            Rectangle::new([(cx, cy), (cx + dx, cy + dy)], color.filled())
        });
        chart.draw_series(cells).map_err(&e)?;
        root.present().map_err(&e)?;
    }
    Ok(path.to_path_buf())
}
