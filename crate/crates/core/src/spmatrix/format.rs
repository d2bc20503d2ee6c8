//! SLDM matrix and SLDV vector files.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Code, Coefficient, MatrixBuilder, SparseMatrix, DEFAULT_C_MAX};
use crate::error::FormatError;
use crate::io::{
    expect_eof, open_read, read_header, read_modulus, read_residue, read_residues, read_u64_len,
    write_atomic, write_header, write_modulus, write_residues,
};
use crate::modring::{PrimeModulus, Residue};

const MATRIX_MAGIC: &[u8; 4] = b"SLDM";
const VECTOR_MAGIC: &[u8; 4] = b"SLDV";

const TAG_PLUS_ONE: u8 = 0;
const TAG_MINUS_ONE: u8 = 1;
const TAG_SMALL: u8 = 2;
const TAG_FULL: u8 = 3;

pub fn write_matrix(w: &mut dyn Write, a: &SparseMatrix) -> Result<(), FormatError> {
    let m = a.modulus();
    write_header(w, MATRIX_MAGIC)?;
    w.write_u64::<LittleEndian>(a.nrows() as u64)?;
    w.write_u64::<LittleEndian>(a.ncols() as u64)?;
    write_modulus(w, m)?;
    w.write_u32::<LittleEndian>(a.dense_columns().len() as u32)?;
    for d in a.dense_columns() {
        w.write_u64::<LittleEndian>(d.col as u64)?;
    }
    for d in a.dense_columns() {
        write_residues(w, m, &d.values)?;
    }
    let mut buf = Vec::new();
    for i in 0..a.nrows() {
        buf.clear();
        let view = a.row_view(i);
        buf.extend_from_slice(&(view.cols.len() as u32).to_le_bytes());
        let mut prev = 0u64;
        for (&c, &code) in view.cols.iter().zip(view.codes) {
            buf.extend_from_slice(&(c as u64 - prev).to_le_bytes());
            prev = c as u64;
            match code {
                Code::PlusOne => buf.push(TAG_PLUS_ONE),
                Code::MinusOne => buf.push(TAG_MINUS_ONE),
                Code::Small(v) => {
                    buf.push(TAG_SMALL);
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                Code::Full(idx) => {
                    buf.push(TAG_FULL);
                    m.write_residue(&a.full_values()[idx as usize], &mut buf);
                }
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Parses and fully validates an SLDM stream; coefficient classes are
/// re-derived from the stored values.
pub fn read_matrix(r: &mut dyn Read) -> Result<SparseMatrix, FormatError> {
    read_header(r, MATRIX_MAGIC)?;
    let nrows = read_u64_len(r)?;
    let ncols = read_u64_len(r)?;
    let m = read_modulus(r)?;
    let dense_count = r.read_u32::<LittleEndian>()? as usize;
    if dense_count > ncols {
        return Err(FormatError::Invariant(
            "more dense columns than columns".into(),
        ));
    }
    let sparse_ncols = ncols - dense_count;
    let mut dense_idx = Vec::with_capacity(dense_count);
    for t in 0..dense_count {
        let c = read_u64_len(r)?;
        if c != sparse_ncols + t {
            return Err(FormatError::Invariant(format!(
                "dense column {c} is not among the top indices"
            )));
        }
        dense_idx.push(c);
    }
    let mut builder = MatrixBuilder::new(&m, ncols);
    let mut dense_values = Vec::with_capacity(dense_count);
    for _ in 0..dense_count {
        dense_values.push(read_residues(r, &m, nrows)?);
    }
    let width = m.residue_bytes();
    let mut rbuf = vec![0u8; width];
    let mut cols: Vec<u32> = Vec::new();
    let mut coeffs: Vec<Coefficient> = Vec::new();
    for i in 0..nrows {
        cols.clear();
        coeffs.clear();
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut col: u64 = 0;
        for e in 0..count {
            let delta = r.read_u64::<LittleEndian>()?;
            if e > 0 && delta == 0 {
                return Err(FormatError::Invariant(format!(
                    "row {i}: column indices not strictly increasing"
                )));
            }
            col = col
                .checked_add(delta)
                .ok_or_else(|| FormatError::Invariant(format!("row {i}: column overflow")))?;
            if col >= sparse_ncols as u64 {
                return Err(FormatError::Invariant(format!(
                    "row {i}: column {col} outside the sparse range {sparse_ncols}"
                )));
            }
            let value = match r.read_u8()? {
                TAG_PLUS_ONE => m.one(),
                TAG_MINUS_ONE => m.from_i64(-1),
                TAG_SMALL => m.from_i64(r.read_i32::<LittleEndian>()? as i64),
                TAG_FULL => read_residue(r, &m, &mut rbuf)?,
                t => {
                    return Err(FormatError::Invariant(format!("row {i}: unknown tag {t}")));
                }
            };
            let coeff = Coefficient::classify(&m, &value, DEFAULT_C_MAX).ok_or_else(|| {
                FormatError::Invariant(format!("row {i}: zero coefficient in column {col}"))
            })?;
            cols.push(col as u32);
            coeffs.push(coeff);
        }
        builder.push_raw_row(&cols, std::mem::take(&mut coeffs));
    }
    expect_eof(r)?;
    for (c, values) in dense_idx.into_iter().zip(dense_values) {
        builder.dense_column(c, values);
    }
    builder
        .build()
        .map_err(|e| FormatError::Invariant(e.to_string()))
}

pub fn store_matrix(a: &SparseMatrix, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, |w| write_matrix(w, a))
}

pub fn load_matrix(path: &Path) -> Result<SparseMatrix, FormatError> {
    read_matrix(&mut open_read(path)?)
}

pub fn write_vector(w: &mut dyn Write, m: &PrimeModulus, v: &[Residue]) -> Result<(), FormatError> {
    write_header(w, VECTOR_MAGIC)?;
    write_modulus(w, m)?;
    w.write_u64::<LittleEndian>(v.len() as u64)?;
    write_residues(w, m, v)
}

pub fn read_vector(r: &mut dyn Read) -> Result<(PrimeModulus, Vec<Residue>), FormatError> {
    read_header(r, VECTOR_MAGIC)?;
    let m = read_modulus(r)?;
    let len = read_u64_len(r)?;
    let v = read_residues(r, &m, len)?;
    expect_eof(r)?;
    Ok((m, v))
}

pub fn store_vector(m: &PrimeModulus, v: &[Residue], path: &Path) -> Result<(), FormatError> {
    write_atomic(path, |w| write_vector(w, m, v))
}

pub fn load_vector(path: &Path) -> Result<(PrimeModulus, Vec<Residue>), FormatError> {
    read_vector(&mut open_read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(a: &SparseMatrix) -> Vec<u8> {
        let mut out = Vec::new();
        write_matrix(&mut out, a).unwrap();
        out
    }

    #[test]
    fn minus_one_round_trip() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let mut b = MatrixBuilder::new(&m, 1);
        b.push_small(&[(0, -1)]).unwrap();
        let a = b.build().unwrap();
        let back = read_matrix(&mut bytes_of(&a).as_slice()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.row_entries(0), vec![(0, Coefficient::MinusOne)]);
    }

    #[test]
    fn empty_round_trip() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let a = SparseMatrix::zero(&m, 0, 0);
        assert_eq!(read_matrix(&mut bytes_of(&a).as_slice()).unwrap(), a);
    }

    #[test]
    fn distinct_errors() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let a = SparseMatrix::identity(&m, 3);
        let bytes = bytes_of(&a);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_matrix(&mut bad.as_slice()),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            read_matrix(&mut &bytes[..bytes.len() - 3]),
            Err(FormatError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            read_matrix(&mut bad.as_slice()),
            Err(FormatError::UnsupportedVersion(9))
        ));
        // last entry's tag is followed by nothing; turn it into an unknown tag
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 1] = 7;
        assert!(matches!(
            read_matrix(&mut bad.as_slice()),
            Err(FormatError::Invariant(_))
        ));
    }

    #[test]
    fn vector_round_trip() {
        let m = PrimeModulus::from_prime_u64(65521).unwrap();
        let v: Vec<Residue> = (0..5).map(|i| m.from_u64(i * 1000)).collect();
        let mut out = Vec::new();
        write_vector(&mut out, &m, &v).unwrap();
        let (m2, v2) = read_vector(&mut out.as_slice()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(v2, v);
    }
}
