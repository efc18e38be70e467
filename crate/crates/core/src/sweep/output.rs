use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row per (kind, S, p, λ, replicate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kind: String,
    #[serde(rename = "S")]
    pub s: usize,
    pub p: f64,
    pub lambda: f64,
    pub replicate: usize,
    pub test_loglik: f64,
    pub test_acc: f64,
    pub seed: u64,
}

/// One row per (kind, S, p) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub kind: String,
    #[serde(rename = "S")]
    pub s: usize,
    pub p: f64,
    pub lambda_star: f64,
    pub lambda_star_lo: f64,
    pub lambda_star_hi: f64,
    pub flat_flag: bool,
    pub boundary_flag: bool,
}

const SWEEP_HEADER: [&str; 8] = ["kind", "S", "p", "lambda", "replicate", "test_loglik", "test_acc", "seed"];
const SUMMARY_HEADER: [&str; 8] = [
    "kind",
    "S",
    "p",
    "lambda_star",
    "lambda_star_lo",
    "lambda_star_hi",
    "flat_flag",
    "boundary_flag",
];

fn write_rows<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Writes sweep rows; an empty slice gives a header-only file.
pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_rows(records, &SWEEP_HEADER, path)
}

pub fn emit_summary(records: &[SummaryRecord], path: &Path) -> Result<()> {
    write_rows(records, &SUMMARY_HEADER, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    read_rows(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>> {
    read_rows(path)
}
