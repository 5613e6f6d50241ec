//! Result rows and their CSV form.
//!
//! Values are rounded to 10 significant digits when a row is built and then
//! written in shortest round-trip form, so parsing an emitted file gives back
//! exactly the rows that produced it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowMethod {
    Analytic,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub k: usize,
    pub method: RowMethod,
    pub rate: f64,
    /// Blank for analytic rows.
    pub std_error: Option<f64>,
    /// Blank unless timings were requested.
    pub wall_clock_ms: Option<f64>,
}

impl ResultRow {
    pub fn new(k: usize, method: RowMethod, rate: f64, std_error: Option<f64>, wall_clock_ms: Option<f64>) -> Self {
        Self {
            k,
            method,
            rate: round_sig(rate),
            std_error: std_error.map(round_sig),
            wall_clock_ms: wall_clock_ms.map(|ms| (ms * 1000.0).round() / 1000.0),
        }
    }
}

pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

pub(crate) fn fmt_value(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_value).unwrap_or_default()
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "method", "rate", "std_error", "wall_clock_ms"])?;
    for r in rows {
        let method = match r.method {
            RowMethod::Analytic => "analytic",
            RowMethod::Mc => "mc",
        };
        w.write_record([
            r.k.to_string(),
            method.to_string(),
            fmt_value(r.rate),
            fmt_opt(r.std_error),
            fmt_opt(r.wall_clock_ms),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> CliResult<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_rows<R: Read>(input: R) -> CliResult<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

/// Writes a plain table with a header row.
pub fn table_to_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let buf = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
