//! Trace CSV files and atomic output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineRow;
use crate::regularized_newton::StepDiagnostics;
use crate::{Error, Result};

/// Column order of every trace file.
pub const TRACE_HEADER: [&str; 8] = [
    "iter",
    "f",
    "grad_norm",
    "lambda_sqrt",
    "rho",
    "step_norm",
    "flops",
    "wall_time_s",
];

/// One CSV row. Baselines leave `lambda_sqrt` and `rho` empty; the last row
/// of a run has no `step_norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub lambda_sqrt: Option<f64>,
    pub rho: Option<f64>,
    pub step_norm: Option<f64>,
    pub flops: u64,
    pub wall_time_s: f64,
}

impl From<&StepDiagnostics> for TraceRow {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            iter: d.iter,
            f: d.f_value,
            grad_norm: d.grad_norm,
            lambda_sqrt: Some(d.lambda_sqrt),
            rho: Some(d.rho),
            step_norm: d.step_norm,
            flops: d.flops,
            wall_time_s: d.wall_time,
        }
    }
}

impl From<&BaselineRow> for TraceRow {
    fn from(r: &BaselineRow) -> Self {
        Self {
            iter: r.iter,
            f: r.f_value,
            grad_norm: r.grad_norm,
            lambda_sqrt: None,
            rho: None,
            step_norm: r.step_norm,
            flops: r.flops,
            wall_time_s: r.wall_time,
        }
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn trace_csv_bytes(rows: &[TraceRow]) -> Result<Vec<u8>> {
    // The header is written by hand so that an empty trace still has one.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("flushing trace buffer: {e}")))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_atomic(path, &trace_csv_bytes(rows)?)
}

/// Reads a trace file; errors name the 1-based data row that failed.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header '{}'", TRACE_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<TraceRow>().enumerate() {
        let row = rec.map_err(|e| {
            Error::parse(path, i + 2, format!("malformed trace row {}: {e}", i + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceRow> {
        vec![
            TraceRow {
                iter: 0,
                f: 1.5,
                grad_norm: 0.25,
                lambda_sqrt: Some(0.5),
                rho: Some(0.0),
                step_norm: Some(0.1),
                flops: 10,
                wall_time_s: 0.0,
            },
            TraceRow {
                iter: 1,
                f: 1.0,
                grad_norm: 1e-9,
                lambda_sqrt: None,
                rho: None,
                step_norm: None,
                flops: 20,
                wall_time_s: 0.0,
            },
        ]
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_csv(&p, &sample()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("iter,f,grad_norm,lambda_sqrt,rho,step_norm,flops,wall_time_s\n"));
        assert!(text.contains("1,1.0,1e-9,,,,20,0.0"));
        assert_eq!(read_trace_csv(&p).unwrap(), sample());
    }

    #[test]
    fn malformed_row_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut bytes = trace_csv_bytes(&sample()).unwrap();
        bytes.extend_from_slice(b"2,oops,1,,,,30,0\n");
        fs::write(&p, bytes).unwrap();
        let e = read_trace_csv(&p).unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
        assert!(e.to_string().contains(":4:"), "{e}");
    }
}
