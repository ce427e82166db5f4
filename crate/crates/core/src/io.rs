// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV input and byte-stable CSV output for data, truth, traces, and
//! benchmark records.
//!
//! Readers sniff an optional header: when every field of the first row
//! parses as a number it is data, otherwise it is skipped. Row and column
//! indices in errors are 1-based over data rows. Writers format count-model
//! values as integers and everything else through the shortest round-trip
//! float form, so equal inputs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::bench::{BenchRecord, TraceRow};
use crate::cost::{CostModel, TimeSeriesMatrix};
use crate::dp::Diagnostics;
use crate::error::{Error, Result};

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

/// Reads a numeric matrix, validating against the model domain. The first
/// row is treated as a header and skipped unless all of its fields parse as
/// numbers.
pub fn read_matrix_csv(path: &Path, model: CostModel) -> Result<TimeSeriesMatrix> {
    let mut reader = open_reader(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_checked = false;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::input(format!("{}: malformed CSV at record {}: {e}", path.display(), index + 1))
        })?;
        let parsed: std::result::Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(c, field)| field.trim().parse::<f64>().map_err(|_| c + 1))
            .collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(column) => {
                if !header_checked {
                    header_checked = true;
                    continue;
                }
                return Err(Error::input(format!(
                    "{}: non-numeric field at data row {}, column {}",
                    path.display(),
                    rows.len() + 1,
                    column
                )));
            }
        }
        header_checked = true;
    }
    TimeSeriesMatrix::from_rows(model, &rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(BufWriter::new(file))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Formats one value: counts as plain integers, reals in shortest
/// round-trip form.
fn format_value(model: &CostModel, y: f64) -> String {
    if model.requires_counts() {
        format!("{}", y as i64)
    } else {
        format!("{y}")
    }
}

/// Writes the matrix with a `dim_1..dim_p` header.
pub fn write_matrix_csv(path: &Path, data: &TimeSeriesMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let header: Vec<String> = (1..=data.p()).map(|k| format!("dim_{k}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for t in 0..data.n() {
        let fields: Vec<String> = data
            .row(t)
            .iter()
            .map(|&y| format_value(data.model(), y))
            .collect();
        writeln!(w, "{}", fields.join(",")).map_err(io_err)?;
    }
    finish(w, path)
}

/// Writes ground-truth boundaries, one per line under a `changepoint`
/// header.
pub fn write_truth_csv(path: &Path, changepoints: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "changepoint").map_err(io_err)?;
    for &cp in changepoints {
        writeln!(w, "{cp}").map_err(io_err)?;
    }
    finish(w, path)
}

/// Writes per-step solver diagnostics: live candidates and geometry
/// operation counts at every time.
pub fn write_diagnostics_csv(path: &Path, diagnostics: &Diagnostics) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "t,live_candidates,inter_ops,excl_ops").map_err(io_err)?;
    for (i, &live) in diagnostics.live_counts.iter().enumerate() {
        // Non-geometric solvers leave the operation counters empty.
        let inter = diagnostics.inter_ops.get(i).copied().unwrap_or(0);
        let excl = diagnostics.excl_ops.get(i).copied().unwrap_or(0);
        writeln!(w, "{},{},{},{}", i + 1, live, inter, excl).map_err(io_err)?;
    }
    finish(w, path)
}

fn write_serializable<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a long-format retained-candidate trace table.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_serializable(path, rows)
}

/// Writes long-format benchmark records, one row per measurement.
pub fn write_bench_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    write_serializable(path, records)
}
