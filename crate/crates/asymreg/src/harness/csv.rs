//! CSV emission: one row per iteration index, fixed column order,
//! 17-significant-digit decimal rendering, byte-identical across reruns.

use std::path::Path;

use crate::iterations::Trace;
use crate::rates::{BoundCurve, RateReport, ResidualKind};
use crate::spaces::{Point, Space};

use super::HarnessError;

/// 17 significant digits round-trip any f64 exactly.
fn render(v: f64) -> String {
    format!("{v:.16e}")
}

fn curve_cell(curve: Option<&BoundCurve>, n: usize) -> (Option<f64>, String) {
    match curve {
        Some(c) if n >= c.start => {
            let v = c.eval(n as f64);
            (Some(v), render(v))
        }
        _ => (None, String::new()),
    }
}

fn margin_cell(bound: Option<f64>, value: Option<f64>) -> String {
    match (bound, value) {
        (Some(b), Some(v)) => render(b - v),
        _ => String::new(),
    }
}

/// Write the residual table for a trace. Columns, in order: `n`, step and
/// map residuals, one `cross_residual_<m>` column per recorded comparison
/// index, the step/map/cross bound-curve values, the step and map margins
/// (bound minus residual), then the point coordinates when the trace kept
/// its points. Cells whose quantity does not exist at that row (the step
/// residual at the horizon, bounds before their start index, curves the
/// scheme does not have) are left empty.
pub fn emit_csv(trace: &Trace, reports: &[RateReport], path: &Path) -> Result<(), HarnessError> {
    let step_curve = reports
        .iter()
        .find(|r| matches!(r.rate.kind, ResidualKind::Step))
        .and_then(|r| r.rate.curve.as_ref());
    let map_curve = reports
        .iter()
        .find(|r| matches!(r.rate.kind, ResidualKind::Map | ResidualKind::Family))
        .and_then(|r| r.rate.curve.as_ref());
    let cross_curve = reports
        .iter()
        .find(|r| matches!(r.rate.kind, ResidualKind::Cross(_)))
        .and_then(|r| r.rate.curve.as_ref());

    let mut header: Vec<String> = vec!["n".into(), "step_residual".into(), "map_residual".into()];
    for (m, _) in &trace.cross_residuals {
        header.push(format!("cross_residual_{m}"));
    }
    header.extend(["bound_step", "bound_map", "bound_cross", "margin_step", "margin_map"]
        .map(String::from));
    let point_columns: Vec<String> = match (&trace.points, point_space(trace)) {
        (Some(_), Some(Space::Euclid { dim })) => (0..dim).map(|i| format!("x{i}")).collect(),
        (Some(_), Some(Space::Tripod)) => vec!["ray".into(), "t".into()],
        _ => Vec::new(),
    };
    header.extend(point_columns.iter().cloned());

    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');

    for n in 0..=trace.horizon {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(n.to_string());
        let step = trace.step_residuals.get(n).copied();
        row.push(step.map(render).unwrap_or_default());
        let map = trace.map_residuals.get(n).copied();
        row.push(map.map(render).unwrap_or_default());
        for (_, series) in &trace.cross_residuals {
            row.push(render(series[n]));
        }
        let (bs, bs_cell) = curve_cell(step_curve, n);
        let (bm, bm_cell) = curve_cell(map_curve, n);
        let (_, bc_cell) = curve_cell(cross_curve, n);
        row.push(bs_cell);
        row.push(bm_cell);
        row.push(bc_cell);
        row.push(margin_cell(bs, step));
        row.push(margin_cell(bm, map));
        if let Some(points) = &trace.points {
            match &points[n] {
                Point::Euclid(coords) => row.extend(coords.iter().map(|&c| render(c))),
                Point::Tripod { ray, t } => {
                    row.push(ray.to_string());
                    row.push(render(*t));
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }

    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn point_space(trace: &Trace) -> Option<Space> {
    trace.points.as_ref().and_then(|pts| pts.first()).map(|p| match p {
        Point::Euclid(coords) => Space::Euclid { dim: coords.len() },
        Point::Tripod { .. } => Space::Tripod,
    })
}
