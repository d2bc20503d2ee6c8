//! Shared pieces of the binary file formats and atomic file replacement.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_bigint::BigUint;

use crate::error::FormatError;
use crate::modring::{PrimeModulus, Residue};

pub const FORMAT_VERSION: u32 = 1;

/// Writes `path` through a sibling temporary file renamed into place, so a
/// crash never leaves a partial file under the final name.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), FormatError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), FormatError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FormatError::Io(e.error))?;
    Ok(())
}

pub fn open_read(path: &Path) -> Result<std::io::BufReader<fs::File>, FormatError> {
    Ok(std::io::BufReader::new(
        fs::File::open(path).map_err(FormatError::Io)?,
    ))
}

pub fn write_header(w: &mut dyn Write, magic: &[u8; 4]) -> Result<(), FormatError> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    Ok(())
}

pub fn read_header(r: &mut dyn Read, magic: &[u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: *magic,
            found,
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    Ok(())
}

/// `u16 ell_bytes` followed by ℓ big-endian.
pub fn write_modulus(w: &mut dyn Write, m: &PrimeModulus) -> Result<(), FormatError> {
    let bytes = m.ell_be_bytes();
    w.write_u16::<LittleEndian>(bytes.len() as u16)?;
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_modulus(r: &mut dyn Read) -> Result<PrimeModulus, FormatError> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    let m = PrimeModulus::new(BigUint::from_bytes_be(&bytes))?;
    if m.residue_bytes() != len {
        return Err(FormatError::Invariant(format!(
            "modulus stored in {len} bytes, expected {}",
            m.residue_bytes()
        )));
    }
    Ok(m)
}

pub fn write_residues(
    w: &mut dyn Write,
    m: &PrimeModulus,
    values: &[Residue],
) -> Result<(), FormatError> {
    let mut buf = Vec::with_capacity(values.len() * m.residue_bytes());
    for v in values {
        m.write_residue(v, &mut buf);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_residue(
    r: &mut dyn Read,
    m: &PrimeModulus,
    buf: &mut [u8],
) -> Result<Residue, FormatError> {
    r.read_exact(buf)?;
    Ok(m.read_residue(buf)?)
}

pub fn read_residues(
    r: &mut dyn Read,
    m: &PrimeModulus,
    count: usize,
) -> Result<Vec<Residue>, FormatError> {
    let mut buf = vec![0u8; m.residue_bytes()];
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        out.push(read_residue(r, m, &mut buf)?);
    }
    Ok(out)
}

/// Fails unless the reader is exhausted.
pub fn expect_eof(r: &mut dyn Read) -> Result<(), FormatError> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(FormatError::Invariant(
            "trailing bytes after payload".into(),
        )),
    }
}

pub fn read_u64_len(r: &mut dyn Read) -> Result<usize, FormatError> {
    let v = r.read_u64::<LittleEndian>()?;
    usize::try_from(v).map_err(|_| FormatError::Invariant(format!("length {v} too large")))
}
