use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{NmfError, Result};
use crate::factor_model::NonnegativeMatrix;

pub const BINARY_MAGIC: &[u8; 5] = b"NNMF1";
const HEADER_LEN: usize = 5 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Comma-separated rows, newline-terminated, no header.
    Csv,
    /// `NNMF1`, u64 rows, u64 cols, then row-major little-endian f64.
    Binary,
}

impl MatrixFormat {
    /// `.csv` means CSV; anything else is the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

fn parse_error(path: &Path, line: usize, col: usize, msg: impl Into<String>) -> NmfError {
    NmfError::Parse {
        path: path.to_path_buf(),
        line,
        col,
        msg: msg.into(),
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<NonnegativeMatrix> {
    match format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| NmfError::io(path, e))?;
            parse_csv(&text, path)
        }
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| NmfError::io(path, e))?;
            parse_binary(&bytes, path)
        }
    }
}

pub fn save_matrix(m: &NonnegativeMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => {
            let mut out = String::new();
            for row in m.as_array().rows() {
                let mut first = true;
                for x in row {
                    if !first {
                        out.push(',');
                    }
                    first = false;
                    let _ = write!(out, "{x}");
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        MatrixFormat::Binary => {
            let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_array().len());
            out.extend_from_slice(BINARY_MAGIC);
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for x in m.as_array().iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out
        }
    };
    fs::write(path, bytes).map_err(|e| NmfError::io(path, e))
}

fn parse_csv(text: &str, path: &Path) -> Result<NonnegativeMatrix> {
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (c, tok) in line.split(',').enumerate() {
            let value: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_error(path, lineno, c + 1, format!("not a number: `{}`", tok.trim())))?;
            if !value.is_finite() {
                return Err(parse_error(path, lineno, c + 1, "non-finite entry"));
            }
            if value < 0.0 {
                return Err(parse_error(path, lineno, c + 1, format!("negative entry {value}")));
            }
            entries.push(value);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(expected) if expected != count => {
                return Err(parse_error(
                    path,
                    lineno,
                    count.min(expected) + 1,
                    format!("row has {count} fields, expected {expected}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_error(path, 1, 1, "empty matrix file"))?;
    NonnegativeMatrix::from_shape_vec(rows, cols, entries)
}

fn parse_binary(bytes: &[u8], path: &Path) -> Result<NonnegativeMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != BINARY_MAGIC {
        return Err(parse_error(path, 0, 0, "missing NNMF1 header"));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let rows = read_u64(5) as usize;
    let cols = read_u64(13) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| parse_error(path, 0, 0, "shape overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(parse_error(
            path,
            0,
            0,
            format!("payload is {} bytes, expected {expected} for {rows}x{cols}", body.len()),
        ));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        let value = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !(value.is_finite() && value >= 0.0) {
            return Err(parse_error(
                path,
                i / cols + 1,
                i % cols + 1,
                format!("invalid entry {value}"),
            ));
        }
        entries.push(value);
    }
    let arr = Array2::from_shape_vec((rows, cols), entries).expect("length checked");
    NonnegativeMatrix::new(arr)
}
