//! CSV persistence with bit-exact float round trips.

use std::path::Path;

use crate::diagnostics::VarianceReport;
use crate::error::Result;
use crate::optimizer::TrajectoryLog;

/// 17 significant digits round-trip any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a table with the given header; every cell already formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::error::Error::Io(io),
        other => crate::error::Error::Io(std::io::Error::other(format!("csv: {other:?}"))),
    }
}

/// Columns: step,alpha,loss,grad_norm,noise_norm.
pub fn write_trajectory_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .rows
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                format_float(r.alpha),
                format_float(r.loss),
                format_float(r.grad_norm),
                format_float(r.noise_norm),
            ]
        })
        .collect();
    write_table(path, &["step", "alpha", "loss", "grad_norm", "noise_norm"], &rows)
}

/// Parameter snapshots (when recorded): step,theta0,theta1,...
pub fn write_params_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let dim = log
        .rows
        .iter()
        .find_map(|r| r.params.as_ref().map(|p| p.len()))
        .unwrap_or(0);
    let mut header = vec!["step".to_string()];
    header.extend((0..dim).map(|i| format!("theta{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = log
        .rows
        .iter()
        .filter_map(|r| {
            r.params.as_ref().map(|p| {
                let mut row = vec![r.step.to_string()];
                row.extend(p.iter().map(|&x| format_float(x)));
                row
            })
        })
        .collect();
    write_table(path, &header_refs, &rows)
}

/// Columns: layer,avg_variance plus run metadata repeated per row.
pub fn write_variance_csv(report: &VarianceReport, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .per_layer
        .iter()
        .map(|lv| {
            vec![
                lv.layer.to_string(),
                format_float(lv.mean_variance),
                report.regime.clone(),
                report.batch_size.to_string(),
                report.draws.to_string(),
            ]
        })
        .collect();
    write_table(
        path,
        &["layer", "avg_variance", "regime", "batch_size", "draws"],
        &rows,
    )
}

/// One parsed trajectory row: (step, alpha, loss, grad_norm, noise_norm).
pub type TrajectoryRecord = (u64, f64, f64, f64, f64);

/// Parse a trajectory CSV back into row tuples.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(io_err)?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| crate::error::Error::ParseError("missing column".into()))?
                .parse::<f64>()
                .map_err(|e| crate::error::Error::ParseError(e.to_string()))
        };
        let step: u64 = record
            .get(0)
            .ok_or_else(|| crate::error::Error::ParseError("missing step".into()))?
            .parse()
            .map_err(|e: std::num::ParseIntError| crate::error::Error::ParseError(e.to_string()))?;
        out.push((step, parse(1)?, parse(2)?, parse(3)?, parse(4)?));
    }
    Ok(out)
}
