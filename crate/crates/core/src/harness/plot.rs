//! SVG figures of a trace.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::sim::Trace;
use crate::error::{Error, Result};

const SIZE: (u32, u32) = (900, 500);

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

fn palette(i: usize) -> RGBColor {
    const C: [RGBColor; 8] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
        RGBColor(227, 119, 194),
        RGBColor(127, 127, 127),
    ];
    C[i % C.len()]
}

fn range(series: &[Vec<(f64, f64)>]) -> (f64, f64) {
    let (lo, hi) = series
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// Line chart with one named series per entry.
pub fn line_chart(path: &Path, title: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let t_end = series
        .iter()
        .flat_map(|(_, s)| s.last())
        .map(|p| p.0)
        .fold(0.0, f64::max)
        .max(1e-9);
    let data: Vec<Vec<(f64, f64)>> = series.iter().map(|(_, s)| s.clone()).collect();
    let (lo, hi) = range(&data);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (name, s)) in series.iter().enumerate() {
        let color = palette(i);
        chart
            .draw_series(LineSeries::new(s.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Topology index over time as a step plot, y ticks labelled `Λ_i`.
pub fn topology_chart(path: &Path, trace: &Trace) -> Result<()> {
    let m = trace.n_topologies.max(1);
    let t_end = trace.steps.last().map_or(1.0, |s| s.k as f64 * trace.dt).max(1e-9);
    let mut pts = Vec::with_capacity(2 * trace.steps.len());
    for (i, s) in trace.steps.iter().enumerate() {
        let t = s.k as f64 * trace.dt;
        if i > 0 {
            pts.push((t, trace.steps[i - 1].topology as f64));
        }
        pts.push((t, s.topology as f64));
    }

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Active topology", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, -0.5..(m as f64 - 0.5))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_labels(m)
        .y_label_formatter(&|v| {
            let r = v.round();
            if (v - r).abs() < 1e-6 && r >= 0.0 {
                format!("Λ_{}", r as usize)
            } else {
                String::new()
            }
        })
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(pts, palette(0).stroke_width(2)))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn state_series(trace: &Trace, idx: usize) -> Vec<(f64, f64)> {
    trace.steps.iter().map(|s| (s.k as f64 * trace.dt, s.x[idx])).collect()
}

/// Writes the standard figures into `dir`. For a platoon (`n_cars` given)
/// these are distance error, relative speed and acceleration per car; for
/// other plants a single chart of all states. The topology chart is always
/// written.
pub fn plot_trace(trace: &Trace, dir: impl AsRef<Path>, n_cars: Option<usize>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let nx = trace.steps.first().map_or(0, |s| s.x.len());
    match n_cars {
        Some(n) if 3 * n == nx => {
            let figs = [
                ("distance_error.svg", "Distance error", "Δd [m]"),
                ("relative_speed.svg", "Relative speed", "Δv [m/s]"),
                ("acceleration.svg", "Acceleration", "a [m/s²]"),
            ];
            for (j, (file, title, unit)) in figs.iter().enumerate() {
                let series: Vec<_> = (0..n)
                    .map(|car| (format!("car {}", car + 1), state_series(trace, 3 * car + j)))
                    .collect();
                let p = dir.join(file);
                line_chart(&p, title, unit, &series)?;
                out.push(p);
            }
        }
        _ => {
            let series: Vec<_> = (0..nx).map(|i| (format!("x{}", i + 1), state_series(trace, i))).collect();
            let p = dir.join("states.svg");
            line_chart(&p, "States", "x", &series)?;
            out.push(p);
        }
    }
    let p = dir.join("topology.svg");
    topology_chart(&p, trace)?;
    out.push(p);
    Ok(out)
}

/// Overlays `‖x(k)‖` of several runs.
pub fn plot_comparison(runs: &[(&str, &Trace)], path: impl AsRef<Path>) -> Result<()> {
    let series: Vec<_> = runs
        .iter()
        .map(|(name, t)| {
            let s = t.steps.iter().map(|s| (s.k as f64 * t.dt, s.x.norm())).collect();
            (name.to_string(), s)
        })
        .collect();
    line_chart(path.as_ref(), "State norm", "‖x‖", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sim::{Metrics, StepRecord};
    use nalgebra::DVector;

    #[test]
    fn topology_labels() {
        let steps = (0..20)
            .map(|k| StepRecord {
                k,
                topology: if k < 10 { 7 } else { 2 },
                x: DVector::from_element(12, 1.0 / (k + 1) as f64),
                u: DVector::zeros(4),
                x_hat: DVector::zeros(12),
                stage_cost: 0.0,
                broadcast: false,
            })
            .collect();
        let trace = Trace {
            dt: 0.1,
            n_topologies: 8,
            steps,
            switches: vec![],
            metrics: Metrics::default(),
            aborted: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let files = plot_trace(&trace, dir.path(), Some(4)).unwrap();
        assert_eq!(files.len(), 4);
        let svg = std::fs::read_to_string(dir.path().join("topology.svg")).unwrap();
        for i in 0..8 {
            assert!(svg.contains(&format!("Λ_{i}")), "missing label {i}");
        }
        plot_comparison(&[("a", &trace), ("b", &trace)], dir.path().join("cmp.svg")).unwrap();
    }
}
