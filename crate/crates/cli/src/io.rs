//! CSV series and JSON report files.

use std::path::Path;

use levy_garch::garch::SimulatedSeries;

use crate::HarnessError;

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read a return series: one value per record, first column, optional
/// header row.
pub fn read_series(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let Some(field) = record.get(0) else { continue };
        match field.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            // A single non-numeric leading row is a header.
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(HarnessError::Config(crate::config::ConfigError::Invalid {
                    reason: format!(
                        "{}: record {} is not numeric: {e}",
                        path.display(),
                        idx + 1
                    ),
                }))
            }
        }
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    }
}

/// Write a simulated series; `include_state` adds the σ² and ε columns.
pub fn write_series(
    path: &Path,
    sim: &SimulatedSeries,
    include_state: bool,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if include_state {
        w.write_record(["y", "sigma2", "eps"])
            .map_err(|e| csv_err(path, e))?;
        for i in 0..sim.y.len() {
            w.write_record([
                format_float(sim.y[i]),
                format_float(sim.sigma2[i]),
                format_float(sim.eps[i]),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    } else {
        w.write_record(["y"]).map_err(|e| csv_err(path, e))?;
        for &v in &sim.y {
            w.write_record([format_float(v)])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Shortest round-trip decimal representation (matches serde_json).
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float formatting is the determinism reference; reuse it.
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

/// Serialize a report as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| {
        HarnessError::Config(crate::config::ConfigError::Invalid {
            reason: format!("report serialization failed: {e}"),
        })
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
