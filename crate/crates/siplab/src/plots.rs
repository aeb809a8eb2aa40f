//! SVG figures: NMSE and symbol MSE / SER versus Es/sigma^2, and per-user
//! heat maps of the learned PDP factors on a shared colour scale.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use sipcore::eval::{MetricRecord, NMSE_FLOOR_DB};
use sipcore::grid::ResourceGrid;
use sipcore::tx::PdpFactors;

use crate::error::{LabError, Result};

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn draw_err<E: std::fmt::Debug>(path: &Path) -> impl Fn(E) -> LabError + '_ {
    move |e| LabError::format(format!("{}: drawing failed: {e:?}", path.display()))
}

/// `(scheme, points)` in first-appearance order, points sorted by SNR.
pub fn curves(rows: &[MetricRecord], y: impl Fn(&MetricRecord) -> Option<f64>) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let Some(v) = y(r) else { continue };
        match out.iter_mut().find(|(s, _)| *s == r.scheme) {
            Some((_, pts)) => pts.push((r.snr_db, v)),
            None => out.push((r.scheme.clone(), vec![(r.snr_db, v)])),
        }
    }
    for (_, pts) in &mut out {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

fn line_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> std::result::Result<(), DrawingAreaErrorKind<DB::ErrorType>> {
    let xs = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let ys = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(xs.0..xs.1, ys.0..ys.1)?;
    chart
        .configure_mesh()
        .x_desc("Es/sigma^2 (dB)")
        .y_desc(y_label)
        .draw()?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    Ok(())
}

/// Writes `nmse.svg` and `mse_ser.svg` into `dir`. Returns the written
/// files; an empty table writes nothing.
pub fn plot_sweep(rows: &[MetricRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        log::warn!("no sweep records, no plots written");
        return Ok(Vec::new());
    }
    let nmse = dir.join("nmse.svg");
    {
        let root = SVGBackend::new(&nmse, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err(&nmse))?;
        // the genie receiver sits at the floor and would flatten the axis
        let series = curves(rows, |r| (r.nmse_db > NMSE_FLOOR_DB).then_some(r.nmse_db));
        line_panel(&root, "Channel estimation NMSE", "NMSE (dB)", &series).map_err(draw_err(&nmse))?;
        root.present().map_err(draw_err(&nmse))?;
    }
    let mse = dir.join("mse_ser.svg");
    {
        let root = SVGBackend::new(&mse, (1200, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err(&mse))?;
        let (left, right) = root.split_horizontally(600);
        line_panel(&left, "Symbol MSE", "mean |d - d_hat|^2", &curves(rows, |r| Some(r.symbol_mse)))
            .map_err(draw_err(&mse))?;
        line_panel(&right, "Symbol error rate", "SER", &curves(rows, |r| Some(r.ser))).map_err(draw_err(&mse))?;
        root.present().map_err(draw_err(&mse))?;
    }
    Ok(vec![nmse, mse])
}

fn heat(t: f64) -> RGBColor {
    // dark blue -> teal -> yellow
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, u: f64| (a + (b - a) * u).round() as u8;
    if t < 0.5 {
        let u = t / 0.5;
        RGBColor(lerp(30.0, 33.0, u), lerp(30.0, 145.0, u), lerp(110.0, 140.0, u))
    } else {
        let u = (t - 0.5) / 0.5;
        RGBColor(lerp(33.0, 250.0, u), lerp(145.0, 230.0, u), lerp(140.0, 30.0, u))
    }
}

/// One `S x T` panel per user (subcarrier on x, symbol on y), coloured on a
/// scale shared across users, in percent.
pub fn plot_pdp_heatmap(rho: &PdpFactors, grid: &ResourceGrid, path: &Path) -> Result<()> {
    if rho.res() != grid.res() {
        return Err(LabError::format("PDP factors do not match the grid"));
    }
    let (s_n, t_n, k_n) = (grid.subcarriers(), grid.symbols(), rho.users());
    let (lo, hi) = rho
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let panel_w = 40 + 12 * s_n as u32;
    let root = SVGBackend::new(path, (panel_w * k_n as u32 + 40, 60 + 14 * t_n as u32 + 60)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err(path))?;
    let (top, bottom) = root.split_vertically(40 + 14 * t_n as u32 + 50);
    let panels = top.split_evenly((1, k_n));
    for (k, panel) in panels.iter().enumerate() {
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("user {k}"), ("sans-serif", 14))
            .margin(6)
            .x_label_area_size(28)
            .y_label_area_size(28)
            .build_cartesian_2d(0..s_n, 0..t_n)
            .map_err(draw_err(path))?;
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("subcarrier")
            .y_desc("symbol")
            .draw()
            .map_err(draw_err(path))?;
        let row = rho.row(k);
        chart
            .draw_series((0..s_n).flat_map(|s| {
                (0..t_n).map(move |t| {
                    let v = row[s + s_n * t];
                    Rectangle::new([(s, t), (s + 1, t + 1)], heat((v - lo) / span).filled())
                })
            }))
            .map_err(draw_err(path))?;
    }
    let legend = format!("PDP factor: {:.2}% (dark) to {:.2}% (light)", 100.0 * lo, 100.0 * hi);
    bottom
        .draw(&Text::new(legend, (10, 10), ("sans-serif", 14)))
        .map_err(draw_err(path))?;
    root.present().map_err(draw_err(path))?;
    Ok(())
}
