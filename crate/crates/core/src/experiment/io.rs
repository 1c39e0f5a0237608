//! Trace CSV and summary JSON serialization.
//!
//! The trace schema is one row per epoch with fixed columns:
//! `epoch,train_loss,train_acc,test_acc,avg_abs_grad,avg_abs_w,pi,grad_fraction,sparsity,effective_lambda_mean`.
//! Floats are written with Rust's shortest round-trip formatting, so a run
//! that produces identical values produces identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentError, MetricsRecord};

pub const TRACE_HEADER: &str =
    "epoch,train_loss,train_acc,test_acc,avg_abs_grad,avg_abs_w,pi,grad_fraction,sparsity,effective_lambda_mean";

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_trace_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), ExperimentError> {
    let mut out = String::with_capacity(records.len() * 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.test_acc,
            r.avg_abs_grad,
            r.avg_abs_w,
            r.pi,
            r.grad_fraction,
            r.sparsity,
            r.effective_lambda_mean
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a trace CSV back. Per-layer vectors are not part of the file format
/// and come back empty.
pub fn read_trace_csv(path: &Path) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = raw.lines();
    let header = lines.next().unwrap_or_default();
    if header != TRACE_HEADER {
        return Err(ExperimentError::Csv {
            path: path.display().to_string(),
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(ExperimentError::Csv {
                path: path.display().to_string(),
                msg: format!("line {}: expected 10 fields, got {}", lineno + 2, fields.len()),
            });
        }
        let parse = |i: usize| -> Result<f64, ExperimentError> {
            fields[i].parse().map_err(|_| ExperimentError::Csv {
                path: path.display().to_string(),
                msg: format!("line {}: bad float {:?}", lineno + 2, fields[i]),
            })
        };
        records.push(MetricsRecord {
            epoch: fields[0].parse().map_err(|_| ExperimentError::Csv {
                path: path.display().to_string(),
                msg: format!("line {}: bad epoch {:?}", lineno + 2, fields[0]),
            })?,
            train_loss: parse(1)?,
            train_acc: parse(2)?,
            test_acc: parse(3)?,
            avg_abs_grad: parse(4)?,
            avg_abs_w: parse(5)?,
            pi: parse(6)?,
            grad_fraction: parse(7)?,
            sparsity: parse(8)?,
            effective_lambda_mean: parse(9)?,
            per_layer_avg_abs_grad: Vec::new(),
            per_layer_avg_abs_w: Vec::new(),
        });
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| ExperimentError::Format(e.to_string()))?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}
