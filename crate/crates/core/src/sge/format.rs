//! SLDT transcript files.
//!
//! Layout after the common header and modulus: `u64` original rows and
//! columns, the row map, the column map and the pinned columns (each as a
//! `u64` count followed by `u64` indices), then a `u64` step count and the
//! steps as tagged records.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{SgeStep, SgeTranscript};
use crate::error::FormatError;
use crate::io::{
    expect_eof, open_read, read_header, read_modulus, read_residue, read_u64_len, write_atomic,
    write_header, write_modulus, write_residues,
};

const MAGIC: &[u8; 4] = b"SLDT";

const TAG_DROP: u8 = 0;
const TAG_SINGLETON: u8 = 1;
const TAG_COMBINE: u8 = 2;

fn write_indices(w: &mut dyn Write, v: &[usize]) -> Result<(), FormatError> {
    w.write_u64::<LittleEndian>(v.len() as u64)?;
    for &x in v {
        w.write_u64::<LittleEndian>(x as u64)?;
    }
    Ok(())
}

fn read_indices(r: &mut dyn Read, bound: usize) -> Result<Vec<usize>, FormatError> {
    let len = read_u64_len(r)?;
    if len > bound {
        return Err(FormatError::Invariant(format!(
            "{len} indices exceed bound {bound}"
        )));
    }
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        let x = read_u64_len(r)?;
        if x >= bound {
            return Err(FormatError::Invariant(format!(
                "index {x} out of range {bound}"
            )));
        }
        v.push(x);
    }
    Ok(v)
}

pub fn write_transcript(w: &mut dyn Write, t: &SgeTranscript) -> Result<(), FormatError> {
    let m = &t.modulus;
    write_header(w, MAGIC)?;
    write_modulus(w, m)?;
    w.write_u64::<LittleEndian>(t.original_nrows as u64)?;
    w.write_u64::<LittleEndian>(t.original_ncols as u64)?;
    write_indices(w, &t.row_map)?;
    write_indices(w, &t.column_map)?;
    write_indices(w, &t.fixed_zero_cols)?;
    w.write_u64::<LittleEndian>(t.steps.len() as u64)?;
    for step in &t.steps {
        match step {
            SgeStep::DropZeroColumn { col } => {
                w.write_u8(TAG_DROP)?;
                w.write_u64::<LittleEndian>(*col as u64)?;
            }
            SgeStep::SolveSingletonColumn {
                row,
                col,
                pivot,
                others,
            } => {
                w.write_u8(TAG_SINGLETON)?;
                w.write_u64::<LittleEndian>(*row as u64)?;
                w.write_u64::<LittleEndian>(*col as u64)?;
                write_residues(w, m, std::slice::from_ref(pivot))?;
                w.write_u32::<LittleEndian>(others.len() as u32)?;
                for (c, v) in others {
                    w.write_u64::<LittleEndian>(*c as u64)?;
                    write_residues(w, m, std::slice::from_ref(v))?;
                }
            }
            SgeStep::CombineRows {
                target,
                source,
                multiplier,
            } => {
                w.write_u8(TAG_COMBINE)?;
                w.write_u64::<LittleEndian>(*target as u64)?;
                w.write_u64::<LittleEndian>(*source as u64)?;
                write_residues(w, m, std::slice::from_ref(multiplier))?;
            }
        }
    }
    Ok(())
}

pub fn read_transcript(r: &mut dyn Read) -> Result<SgeTranscript, FormatError> {
    read_header(r, MAGIC)?;
    let m = read_modulus(r)?;
    let nrows = read_u64_len(r)?;
    let ncols = read_u64_len(r)?;
    let row_map = read_indices(r, nrows)?;
    let column_map = read_indices(r, ncols)?;
    let fixed_zero_cols = read_indices(r, ncols)?;
    let count = read_u64_len(r)?;
    let mut buf = vec![0u8; m.residue_bytes()];
    let mut steps = Vec::with_capacity(count.min(1 << 20));
    let index = |r: &mut dyn Read, bound: usize| -> Result<usize, FormatError> {
        let x = read_u64_len(r)?;
        if x >= bound {
            return Err(FormatError::Invariant(format!(
                "index {x} out of range {bound}"
            )));
        }
        Ok(x)
    };
    let nonzero = |v: crate::modring::Residue| {
        if v.is_zero() {
            Err(FormatError::Invariant(
                "zero multiplier in transcript".into(),
            ))
        } else {
            Ok(v)
        }
    };
    for _ in 0..count {
        let step = match r.read_u8()? {
            TAG_DROP => SgeStep::DropZeroColumn {
                col: index(r, ncols)?,
            },
            TAG_SINGLETON => {
                let row = index(r, nrows)?;
                let col = index(r, ncols)?;
                let pivot = nonzero(read_residue(r, &m, &mut buf)?)?;
                let k = r.read_u32::<LittleEndian>()? as usize;
                let mut others = Vec::with_capacity(k.min(1 << 16));
                for _ in 0..k {
                    let c = index(r, ncols)?;
                    others.push((c, read_residue(r, &m, &mut buf)?));
                }
                SgeStep::SolveSingletonColumn {
                    row,
                    col,
                    pivot,
                    others,
                }
            }
            TAG_COMBINE => SgeStep::CombineRows {
                target: index(r, nrows)?,
                source: index(r, nrows)?,
                multiplier: nonzero(read_residue(r, &m, &mut buf)?)?,
            },
            t => return Err(FormatError::Invariant(format!("unknown step tag {t}"))),
        };
        steps.push(step);
    }
    expect_eof(r)?;
    Ok(SgeTranscript {
        modulus: m,
        steps,
        original_nrows: nrows,
        original_ncols: ncols,
        row_map,
        column_map,
        fixed_zero_cols,
    })
}

pub fn store_transcript(t: &SgeTranscript, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, |w| write_transcript(w, t))
}

pub fn load_transcript(path: &Path) -> Result<SgeTranscript, FormatError> {
    read_transcript(&mut open_read(path)?)
}
