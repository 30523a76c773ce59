//! Forecast record CSV: one row per (trial, horizon), the atom every
//! downstream analysis consumes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Task;

/// One forecast with its ground truth and covariates, in reporting units
/// (COP in millimetres, TOI in milliseconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub subject: u16,
    pub trial: usize,
    pub task: Task,
    pub fh_frames: u32,
    pub fh_ms: f64,
    pub prediction: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub torso_vel: f64,
    pub toe_vel: f64,
    pub cop_truth_mm: f64,
}

/// Write records with the canonical header. `preamble` lines (e.g. the run
/// manifest reference) are emitted as `#`-prefixed comments before the
/// header.
pub fn write_records(
    path: &Path,
    records: &[ForecastRecord],
    preamble: &[String],
) -> csv::Result<()> {
    let mut raw = Vec::new();
    for line in preamble {
        writeln!(raw, "# {line}").expect("vec write");
    }
    let mut w = csv::Writer::from_writer(raw);
    for r in records {
        w.serialize(r)?;
    }
    let raw = w.into_inner().expect("flush csv");
    fs::write(path, raw)?;
    Ok(())
}

/// Read records, skipping `#` comment lines.
pub fn read_records(path: &Path) -> csv::Result<Vec<ForecastRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    rdr.deserialize().collect()
}
