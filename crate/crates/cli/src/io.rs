//! CSV and JSON files: comma-separated, '.' decimal point, header row, LF line endings.

use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use serde::de::DeserializeOwned;
use serde::Serialize;
use splitfit_core::{Data, Schedule, TimeUnit};

use crate::error::{CliError, Result};

/// Shortest round-tripping text for a number, in exponent form only for extreme magnitudes.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// Header plus string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: impl IntoIterator<Item = f64>) {
        self.rows.push(row.into_iter().map(fmt_num).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses every cell of column `k` as a number.
    pub fn numbers(&self, k: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(k).ok_or_else(|| CliError::Data(format!("row {} has no column {k}", i + 1)))?;
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Data(format!("row {}, column {k}: {cell:?}: {e}", i + 1)))
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = WriterBuilder::new()
            .terminator(Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| CliError::config_io(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::config_io(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| CliError::config_io(path, e))?;
        }
        w.flush().map_err(|e| CliError::config_io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = ReaderBuilder::new().from_path(path).map_err(|e| CliError::data_io(path, e))?;
        let header = r
            .headers()
            .map_err(|e| CliError::data_io(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::data_io(path, e))?;
        Ok(Self { header, rows })
    }
}

/// Writes `(t, value)` rows.
pub fn write_series(path: &Path, data: &Data) -> Result<()> {
    let mut table = Table::new(["t", "value"]);
    for (&t, &v) in data.times().iter().zip(data.values()) {
        table.push_numbers([t, v]);
    }
    table.write(path)
}

/// Reads a series written by [`write_series`]: times in column 1, values in column 2.
pub fn read_series(path: &Path, unit: TimeUnit) -> Result<Data> {
    let table = Table::read(path)?;
    if table.header.len() < 2 {
        return Err(CliError::data_io(path, "expected at least two columns (t, value)"));
    }
    let times = table.numbers(0).map_err(|e| CliError::data_io(path, e))?;
    let values = table.numbers(1).map_err(|e| CliError::data_io(path, e))?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::data_io(path, format!("non-finite value in row {}", i + 1)));
    }
    let schedule = Schedule::new(times, unit).map_err(|e| CliError::data_io(path, e))?;
    Data::new(schedule, values).map_err(|e| CliError::data_io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::config_io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::config_io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data_io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_through_text() {
        for x in [0.0, -0.0, 1.0, 2.011224, 1e-7, 9.9727e-8, 1.5e20, -3.25e-300, 0.1 + 0.2, f64::MAX] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x}");
        }
        assert_eq!(fmt_num(2.5), "2.5");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn series_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let data = Data::new(
            Schedule::new(vec![0.5, 1.0, 1e6], TimeUnit::Seconds).unwrap(),
            vec![1.0 / 3.0, -2e-9, 7.0],
        )
        .unwrap();
        write_series(&path, &data).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,value\n") && !text.contains('\r'));
        assert_eq!(read_series(&path, TimeUnit::Seconds).unwrap(), data);
    }

    #[test]
    fn malformed_series_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,value\n1,2\n1,3\n").unwrap();
        assert_eq!(read_series(&path, TimeUnit::Seconds).unwrap_err().exit_code(), 3);
        fs::write(&path, "t,value\n1,x\n").unwrap();
        assert_eq!(read_series(&path, TimeUnit::Seconds).unwrap_err().exit_code(), 3);
        assert_eq!(read_series(&dir.path().join("missing.csv"), TimeUnit::Seconds).unwrap_err().exit_code(), 3);
    }
}
