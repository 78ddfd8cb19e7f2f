//! File access. Feature inputs ending in `.csv` are read as one row per
//! vector (label first, then `m` values); everything else must be a binary
//! container.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use sdbe_core::container::{decode_matrix, decode_model, encode_matrix, StoredModel};

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Matrix and labels from either format; columns are vectors.
pub fn read_matrix(path: &Path) -> CliResult<(DMatrix<f64>, Vec<i32>)> {
    if is_csv(path) {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        parse_feature_csv(&text)
    } else {
        Ok(decode_matrix(&read_bytes(path)?)?)
    }
}

pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>, labels: &[i32]) -> CliResult<()> {
    write_bytes(path, &encode_matrix(matrix, labels)?)
}

pub fn read_model(path: &Path) -> CliResult<StoredModel> {
    Ok(decode_model(&read_bytes(path)?)?)
}

pub fn parse_feature_csv(text: &str) -> CliResult<(DMatrix<f64>, Vec<i32>)> {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut m = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let csv_err = |message: String| CliError::Csv {
            line: i + 1,
            message,
        };
        let mut fields = line.split(',').map(str::trim);
        let label = fields.next().unwrap_or("");
        let label: i32 = label
            .parse()
            .map_err(|_| csv_err(format!("bad label '{label}'")))?;
        let start = values.len();
        for f in fields {
            let x: f64 = f.parse().map_err(|_| csv_err(format!("bad value '{f}'")))?;
            if !x.is_finite() {
                return Err(csv_err(format!("non-finite value '{f}'")));
            }
            values.push(x);
        }
        let width = values.len() - start;
        match m {
            None if width == 0 => return Err(csv_err("row has no feature values".into())),
            None => m = Some(width),
            Some(w) if w != width => {
                return Err(csv_err(format!("expected {w} values, found {width}")))
            }
            _ => {}
        }
        labels.push(label);
    }
    let m = m.ok_or(CliError::Csv {
        line: 0,
        message: "no rows".into(),
    })?;
    Ok((DMatrix::from_vec(m, labels.len(), values), labels))
}

/// Seventeen significant digits, so values survive a text round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows are joined with '\n' on every platform.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn feature_csv(matrix: &DMatrix<f64>, labels: &[i32]) -> String {
    let mut text = String::new();
    for (j, col) in matrix.column_iter().enumerate() {
        text.push_str(&labels[j].to_string());
        for x in col.iter() {
            text.push(',');
            text.push_str(&fmt_f64(*x));
        }
        text.push('\n');
    }
    text
}

/// Writes text to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
