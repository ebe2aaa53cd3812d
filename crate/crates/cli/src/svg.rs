//! Learning-curve charts.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use stackelberg_core::harness::{aggregate, group_runs, read_curve_csv, read_summary_reference, Band};

use crate::Failure;

const GRID_POINTS: usize = 200;

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Crash(format!("{}: {e}", path.display()))
}

/// Experiment directories are those holding a `summary.csv`; a bundle is expanded one level.
fn experiment_dirs(dirs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for d in dirs {
        if d.join("summary.csv").is_file() {
            out.push(d.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("summary.csv").is_file())
            .collect();
        subs.sort();
        if subs.is_empty() {
            return Err(Failure::Config(format!("{}: no experiment (summary.csv) found", d.display())));
        }
        out.extend(subs);
    }
    Ok(out)
}

fn load(dir: &Path) -> Result<(Band, f64), Failure> {
    let reference = read_summary_reference(&std::fs::read_to_string(dir.join("summary.csv")).map_err(|e| io(dir, e))?)
        .map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != "summary.csv"))
        .collect();
    files.sort();
    let mut points = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| io(f, e))?;
        points.extend(read_curve_csv(&text).map_err(|e| Failure::Config(format!("{}: {e}", f.display())))?);
    }
    let band = aggregate(&group_runs(points), GRID_POINTS)
        .map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    Ok((band, reference))
}

fn draw(band: &Band, reference: f64, title: &str, path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let x_max = band.steps.last().copied().unwrap_or(1.0).max(1.0);
    let x_min = band.steps.first().copied().unwrap_or(0.0).min(x_max - 1.0);
    let lo = band.min.iter().copied().fold(reference, f64::min);
    let hi = band.max.iter().copied().fold(reference, f64::max);
    let pad = ((hi - lo) * 0.05).max(0.1);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_min..x_max, (lo - pad)..(hi + pad))?;
    chart
        .configure_mesh()
        .x_desc("combined environment steps")
        .y_desc("mean episode reward (leader)")
        .draw()?;
    let envelope: Vec<(f64, f64)> = band
        .steps
        .iter()
        .zip(&band.max)
        .map(|(&x, &y)| (x, y))
        .chain(band.steps.iter().zip(&band.min).rev().map(|(&x, &y)| (x, y)))
        .collect();
    chart.draw_series(std::iter::once(Polygon::new(envelope, BLUE.mix(0.2).filled())))?;
    chart
        .draw_series(LineSeries::new(
            band.steps.iter().zip(&band.mean).map(|(&x, &y)| (x, y)),
            BLUE.stroke_width(2),
        ))?
        .label(format!("mean over {} seeds (min/max band)", band.runs))
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE.stroke_width(2)));
    chart
        .draw_series(DashedLineSeries::new(
            vec![(x_min, reference), (x_max, reference)],
            8,
            6,
            RED.stroke_width(2),
        ))?
        .label(format!("exact solver optimum {reference}"))
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED.stroke_width(2)));
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// One SVG per experiment directory, written as `<out>/<dir name>.svg`.
pub fn plot_dirs(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, Failure> {
    if dirs.is_empty() {
        return Err(Failure::Config("no input directories".into()));
    }
    let experiments = experiment_dirs(dirs)?;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut written = Vec::new();
    for dir in experiments {
        let (band, reference) = load(&dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        let path = out.join(format!("{name}.svg"));
        draw(&band, reference, &name, &path).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
