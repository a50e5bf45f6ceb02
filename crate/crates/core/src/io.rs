//! Plain CSV matrices and vectors: one matrix row per line, `.` decimal
//! separator, no header. Vectors may be laid out as a single row, a single
//! column, or any rectangle; entries are read in row-major order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: cannot parse `{value}` as a number")]
    Parse {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("{path}: {source}")]
    Shape { path: PathBuf, source: LinalgError },
}

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_rows(path: &Path, reader: impl Read) -> Result<Vec<Vec<f64>>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|source| IoError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| IoError::Parse {
                    path: path.to_owned(),
                    line,
                    value: field.to_owned(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_matrix(path: &Path, reader: impl Read) -> Result<DenseMatrix, IoError> {
    let rows = read_rows(path, reader)?;
    DenseMatrix::from_rows(&rows).map_err(|source| IoError::Shape {
        path: path.to_owned(),
        source,
    })
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DenseMatrix, IoError> {
    let path = path.as_ref();
    parse_matrix(path, open(path)?)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>, IoError> {
    let path = path.as_ref();
    let v: Vec<f64> = read_rows(path, open(path)?)?.into_iter().flatten().collect();
    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
        return Err(IoError::Shape {
            path: path.to_owned(),
            source: LinalgError::NonFinite(pos),
        });
    }
    Ok(v)
}

/// One entry per line.
pub fn write_vector_csv(path: impl AsRef<Path>, x: &[f64]) -> Result<(), IoError> {
    let path = path.as_ref();
    let err = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = File::create(path).map_err(err)?;
    for v in x {
        writeln!(f, "{}", fmt_float(*v)).map_err(err)?;
    }
    Ok(())
}

pub fn write_matrix_csv(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<(), IoError> {
    let path = path.as_ref();
    let err = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = File::create(path).map_err(err)?;
    for i in 0..a.rows() {
        let line: Vec<String> = a.row(i).iter().map(|v| fmt_float(*v)).collect();
        writeln!(f, "{}", line.join(",")).map_err(err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_matrix_with_whitespace_and_comments() {
        let text = "# measurement matrix\n1, 0, 1\n0,1,1\n\n";
        let a = parse_matrix(Path::new("inline"), text.as_bytes()).unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap());
    }

    #[test]
    fn ragged_and_garbage_rows_are_rejected() {
        let err = parse_matrix(Path::new("m.csv"), "1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::Shape { .. }));
        let err = parse_matrix(Path::new("m.csv"), "1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = DenseMatrix::from_rows(&[[0.1, -2.5e-17], [1.0 / 3.0, 7.0]]).unwrap();
        let p = dir.path().join("a.csv");
        write_matrix_csv(&p, &a).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), a);

        let x = vec![std::f64::consts::PI, -0.0, 1e300];
        let p = dir.path().join("x.csv");
        write_vector_csv(&p, &x).unwrap();
        assert_eq!(read_vector_csv(&p).unwrap(), x);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_matrix_csv("/nonexistent/a.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/a.csv"));
    }
}
