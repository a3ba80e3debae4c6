//! CSV reading and writing.
//!
//! Written tables start with one `#` comment line recording the command,
//! the configuration hash and the version, followed by a header row. Reals
//! carry 17 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// `v` with 17 significant digits, which round-trips any `f64`.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, comment: &str, header: &[&str]) -> Result<Self> {
        let mut file = File::create(path).map_err(CliError::io(path))?;
        writeln!(file, "# {comment}").map_err(CliError::io(path))?;
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        writer.write_record(header).map_err(|e| csv_error(path, e))?;
        Ok(CsvOut { path: path.to_path_buf(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(CliError::io(&self.path))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::Parse { path: path.to_path_buf(), line, message: e.to_string() }
}

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Rows with their 1-based line numbers.
    pub rows: Vec<(u64, Vec<f64>)>,
}

impl Table {
    /// Reads a CSV with a header row; `#` lines are skipped and empty fields
    /// read as NaN.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(CliError::io(path))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let values = record
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        f.parse::<f64>().map_err(|_| CliError::Parse {
                            path: path.to_path_buf(),
                            line,
                            message: format!("'{f}' is not a number"),
                        })
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((line, values));
        }
        Ok(Table { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// `(x, y)` pairs from two columns.
    pub fn pairs(&self, x: usize, y: usize) -> Vec<(f64, f64)> {
        self.rows.iter().map(|(_, r)| (r[x], r[y])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            let s = real(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(real(0.25), "2.5000000000000000e-1");
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut out = CsvOut::create(&path, "test config_hash=abc", &["alpha", "value"]).unwrap();
        out.row([real(0.5), real(0.25)]).unwrap();
        out.row([real(1.0), String::new()]).unwrap();
        out.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# test config_hash=abc\nalpha,value\n"));
        let t = Table::read(&path).unwrap();
        assert_eq!(t.headers, vec!["alpha", "value"]);
        assert_eq!(t.rows[0], (3, vec![0.5, 0.25]));
        assert!(t.rows[1].1[1].is_nan());
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# c\nalpha,p\n0.1,0.2\n0.2,oops\n").unwrap();
        match Table::read(&path) {
            Err(CliError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "alpha,p\n0.1,0.2\n0.2\n").unwrap();
        match Table::read(&path) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
