//! Matrix files.
//!
//! Text: a `rows cols` header line followed by `rows` lines of whitespace
//! separated values. Values are written in shortest round-trip form, so a
//! text round trip is bit exact.
//!
//! Binary (`.bin` extension): `rows` and `cols` as little-endian `u64`,
//! then `rows * cols` little-endian `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CdlError, Result};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Text,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Text => "txt",
            MatrixFormat::Binary => "bin",
        }
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Text => {
            let text = fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
            parse_text(path, &text)
        }
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| CdlError::io(path, e))?;
            parse_binary(path, &bytes)
        }
    }
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = match MatrixFormat::from_path(path) {
        MatrixFormat::Text => render_text(m).into_bytes(),
        MatrixFormat::Binary => render_binary(m),
    };
    let mut file = fs::File::create(path).map_err(|e| CdlError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| CdlError::io(path, e))
}

fn render_text(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn render_binary(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_text(path: &Path, text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| CdlError::format(path, "empty matrix file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            CdlError::format(path, format!("line {}: expected `rows cols` header", hline + 1))
        })?;
    let [rows, cols] = dims[..] else {
        return Err(CdlError::format(
            path,
            format!("line {}: expected `rows cols` header", hline + 1),
        ));
    };
    if rows == 0 || cols == 0 {
        return Err(CdlError::format(path, "matrix must have at least one row and column"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in lines {
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != cols {
            return Err(CdlError::format(
                path,
                format!("line {}: expected {cols} values, found {}", lineno + 1, values.len()),
            ));
        }
        for (col, tok) in values.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                CdlError::format(
                    path,
                    format!("line {}, column {}: invalid number `{tok}`", lineno + 1, col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(CdlError::format(
                    path,
                    format!("line {}, column {}: non-finite value", lineno + 1, col + 1),
                ));
            }
            data.push(v);
        }
        seen_rows += 1;
        if seen_rows > rows {
            return Err(CdlError::format(
                path,
                format!("line {}: more than {rows} rows", lineno + 1),
            ));
        }
    }
    if seen_rows != rows {
        return Err(CdlError::format(
            path,
            format!("expected {rows} rows, found {seen_rows}"),
        ));
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 16 {
        return Err(CdlError::format(path, "truncated binary header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(0) as usize, word(8) as usize);
    if rows == 0 || cols == 0 {
        return Err(CdlError::format(path, "matrix must have at least one row and column"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| CdlError::format(path, "matrix dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(CdlError::format(
            path,
            format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[16..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(CdlError::format(
                path,
                format!("entry ({}, {}): non-finite value", i / cols, i % cols),
            ));
        }
        data.push(v);
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                r * c,
            )
            .prop_map(move |v| Matrix::from_row_slice(r, c, &v))
        })
    }

    proptest! {
        #[test]
        fn round_trips_are_bit_exact(m in arb_matrix()) {
            let text = render_text(&m);
            let back = parse_text(Path::new("m.txt"), &text).unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            let bin = render_binary(&m);
            let back = parse_binary(Path::new("m.bin"), &bin).unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn text_errors_name_location() {
        let p = Path::new("feat.txt");
        let err = parse_text(p, "2 2\n1 2\n3 x\n").unwrap_err().to_string();
        assert!(err.contains("feat.txt") && err.contains("line 3, column 2"), "{err}");
        let err = parse_text(p, "2 2\n1 2\n3 NaN\n").unwrap_err().to_string();
        assert!(err.contains("non-finite"), "{err}");
        let err = parse_text(p, "2 2\n1 2\n").unwrap_err().to_string();
        assert!(err.contains("expected 2 rows"), "{err}");
        let err = parse_text(p, "2 2\n1 2 3\n").unwrap_err().to_string();
        assert!(err.contains("expected 2 values"), "{err}");
        assert!(parse_text(p, "").is_err());
    }

    #[test]
    fn binary_rejects_bad_payloads() {
        let p = Path::new("m.bin");
        let mut bytes = render_binary(&Matrix::from_element(2, 2, 1.0));
        assert!(parse_binary(p, &bytes[..20]).is_err());
        bytes[16..24].copy_from_slice(&f64::INFINITY.to_le_bytes());
        let err = parse_binary(p, &bytes).unwrap_err().to_string();
        assert!(err.contains("entry (0, 0)"), "{err}");
    }
}
