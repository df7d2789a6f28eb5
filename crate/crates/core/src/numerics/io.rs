//! Flat binary matrix encoding: `rows: u64 LE`, `cols: u64 LE`, then
//! `rows * cols` IEEE-754 binary64 values, little-endian, row-major.
//! Values are always stored as f64 regardless of the in-memory scalar.

use std::io::{self, Read, Write};

use super::matrix::Matrix;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Upper bound on entries accepted when decoding, so corrupt headers cannot
/// trigger huge allocations.
const MAX_ENTRIES: u64 = 1 << 32;

pub fn write_matrix<S: Scalar, W: Write>(w: &mut W, m: &Matrix<S>) -> io::Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for &v in m.as_slice() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_matrix<S: Scalar, R: Read>(r: &mut R) -> Result<Matrix<S>> {
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R, what: &str| -> Result<u64> {
        r.read_exact(&mut word)
            .map_err(|e| truncated(e, what))?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = next_u64(r, "row count")?;
    let cols = next_u64(r, "column count")?;
    let count = rows
        .checked_mul(cols)
        .filter(|&n| n <= MAX_ENTRIES)
        .ok_or_else(|| Error::Format(format!("implausible matrix dims {rows}x{cols}")))?;
    let mut bytes = vec![0u8; count as usize * 8];
    r.read_exact(&mut bytes).map_err(|e| truncated(e, "payload"))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Matrix::from_vec(rows as usize, cols as usize, data)
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("truncated matrix: missing {what}"))
    } else {
        Error::Io(e)
    }
}

pub fn matrix_to_bytes<S: Scalar>(m: &Matrix<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.len() * 8);
    write_matrix(&mut out, m).expect("writing to a Vec cannot fail");
    out
}
