//! Binary trajectory dump: a fixed header followed by little-endian complex64 rows.
//!
//! Layout: magic `QFTRAJ01` (8 bytes), `rows: u64`, `row_len: u64`,
//! `t0: f64`, `dt: f64`, then `rows * row_len` pairs of `f32` (re, im).
//! Matrices are flattened column-major.

use std::io::{self, Read, Write};

use num_complex::Complex;

use crate::scalar::{CMatrix, CVector, Real};

pub const DUMP_MAGIC: &[u8; 8] = b"QFTRAJ01";

/// A state that can be written as one row of complex values.
pub trait DumpRow<T: Real> {
    fn row(&self) -> Vec<Complex<T>>;
}

impl<T: Real> DumpRow<T> for CVector<T> {
    fn row(&self) -> Vec<Complex<T>> {
        self.as_slice().to_vec()
    }
}

impl<T: Real> DumpRow<T> for CMatrix<T> {
    fn row(&self) -> Vec<Complex<T>> {
        self.as_slice().to_vec()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub rows: u64,
    pub row_len: u64,
    pub t0: f64,
    pub dt: f64,
}

pub fn write_dump<T: Real, X: DumpRow<T>, W: Write>(out: &mut W, t0: f64, dt: f64, states: &[X]) -> io::Result<()> {
    let row_len = states.first().map_or(0, |s| s.row().len());
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(states.len() as u64).to_le_bytes())?;
    out.write_all(&(row_len as u64).to_le_bytes())?;
    out.write_all(&t0.to_le_bytes())?;
    out.write_all(&dt.to_le_bytes())?;
    for s in states {
        let row = s.row();
        if row.len() != row_len {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "ragged rows"));
        }
        for z in row {
            out.write_all(&(z.re.as_f64() as f32).to_le_bytes())?;
            out.write_all(&(z.im.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_dump<R: Read>(input: &mut R) -> io::Result<(DumpHeader, Vec<Vec<Complex<f32>>>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad trajectory dump magic"));
    }
    let header = DumpHeader {
        rows: read_u64(input)?,
        row_len: read_u64(input)?,
        t0: read_f64(input)?,
        dt: read_f64(input)?,
    };
    let mut rows = Vec::with_capacity(header.rows as usize);
    let mut b = [0u8; 4];
    for _ in 0..header.rows {
        let mut row = Vec::with_capacity(header.row_len as usize);
        for _ in 0..header.row_len {
            input.read_exact(&mut b)?;
            let re = f32::from_le_bytes(b);
            input.read_exact(&mut b)?;
            row.push(Complex::new(re, f32::from_le_bytes(b)));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
