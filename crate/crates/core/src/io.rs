//! Covariance CSV parsing, float formatting and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Parses a dense square matrix: one row per line, comma-separated, no
/// header. Blank lines and surrounding whitespace are ignored.
pub fn parse_covariance_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                let field = field.trim();
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Parse(format!(
                        "line {}, column {}: not a finite number: {field:?}",
                        lineno + 1,
                        col + 1
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 {
        return Err(Error::Parse("empty covariance file".into()));
    }
    if rows[0].len() != p {
        return Err(Error::Parse(format!("matrix is {p}×{} but must be square", rows[0].len())));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_square_matrix() {
        let m = parse_covariance_csv("1, 0.5\n0.5,1\n\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn rejects_ragged_and_non_square() {
        assert!(parse_covariance_csv("1,2\n3\n").is_err());
        assert!(parse_covariance_csv("1,2\n3,4\n5,6\n").is_err());
        assert!(parse_covariance_csv("").is_err());
        assert!(parse_covariance_csv("nan").is_err());
        assert!(parse_covariance_csv("a,b\nc,d").is_err());
    }

    #[test]
    fn float_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("lp-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_atomic(&path, b"a").unwrap();
        write_atomic(&path, b"bc").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"bc");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
