//! Krylov checkpoints.
//!
//! Directory layout: `seq/col_<j>.sldq` holds the terms of column task `j`
//! computed so far, `iter/col_<j>.sldv` its current iterate and `meta.txt`
//! the run parameters as `key=value` lines. A column file with `t + 1`
//! terms pairs with the iterate `A^t·y_j`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, WriteBytesExt};

use crate::error::{FormatError, SolverError};
use crate::io::{
    expect_eof, open_read, read_header, read_modulus, read_residues, read_u64_len, write_atomic,
    write_header, write_modulus, write_residues,
};
use crate::modring::{PrimeModulus, Residue};
use crate::spmatrix::{load_vector, store_vector};

/// Sequence terms and the last iterate of one column task.
type Saved = (Vec<Vec<Residue>>, Vec<Residue>);

const MAGIC: &[u8; 4] = b"SLDQ";

/// Terms of an `m × n` matrix sequence, flattened row-major per term.
pub fn write_sequence(
    w: &mut dyn Write,
    modulus: &PrimeModulus,
    m: usize,
    n: usize,
    terms: &[Vec<Residue>],
) -> Result<(), FormatError> {
    write_header(w, MAGIC)?;
    write_modulus(w, modulus)?;
    w.write_u64::<LittleEndian>(m as u64)?;
    w.write_u64::<LittleEndian>(n as u64)?;
    w.write_u64::<LittleEndian>(terms.len() as u64)?;
    for t in terms {
        if t.len() != m * n {
            return Err(FormatError::Invariant(format!(
                "term has {} entries, expected {}",
                t.len(),
                m * n
            )));
        }
        write_residues(w, modulus, t)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredSequence {
    pub modulus: PrimeModulus,
    pub m: usize,
    pub n: usize,
    pub terms: Vec<Vec<Residue>>,
}

pub fn read_sequence(r: &mut dyn Read) -> Result<StoredSequence, FormatError> {
    read_header(r, MAGIC)?;
    let modulus = read_modulus(r)?;
    let m = read_u64_len(r)?;
    let n = read_u64_len(r)?;
    let count = read_u64_len(r)?;
    if m == 0 || n == 0 {
        return Err(FormatError::Invariant("empty term shape".into()));
    }
    let mut terms = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        terms.push(read_residues(r, &modulus, m * n)?);
    }
    expect_eof(r)?;
    Ok(StoredSequence {
        modulus,
        m,
        n,
        terms,
    })
}

pub fn store_sequence(
    path: &Path,
    modulus: &PrimeModulus,
    m: usize,
    n: usize,
    terms: &[Vec<Residue>],
) -> Result<(), FormatError> {
    write_atomic(path, |w| write_sequence(w, modulus, m, n, terms))
}

pub fn load_sequence(path: &Path) -> Result<StoredSequence, FormatError> {
    read_sequence(&mut open_read(path)?)
}

/// Parameters a checkpoint must agree with to be resumed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub count: usize,
    pub seed: u64,
    pub attempt: u32,
    pub unit_x: bool,
    pub modulus: String,
}

impl CheckpointMeta {
    fn to_text(&self) -> String {
        format!(
            "format=1\ndim={}\nn={}\nm={}\ncount={}\nseed={}\nattempt={}\nx={}\nmodulus={}\n",
            self.dim,
            self.n,
            self.m,
            self.count,
            self.seed,
            self.attempt,
            if self.unit_x { "unit" } else { "random" },
            self.modulus
        )
    }

    fn parse(text: &str) -> Option<Self> {
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        if kv.get("format") != Some(&"1") {
            return None;
        }
        Some(CheckpointMeta {
            dim: kv.get("dim")?.parse().ok()?,
            n: kv.get("n")?.parse().ok()?,
            m: kv.get("m")?.parse().ok()?,
            count: kv.get("count")?.parse().ok()?,
            seed: kv.get("seed")?.parse().ok()?,
            attempt: kv.get("attempt")?.parse().ok()?,
            unit_x: *kv.get("x")? == "unit",
            modulus: kv.get("modulus")?.to_string(),
        })
    }
}

/// Where and how often the Krylov phase saves its state.
#[derive(Clone, Debug)]
pub struct CheckpointConfig {
    pub dir: PathBuf,
    /// Save every `interval` iterations of a column task.
    pub interval: u64,
    /// Stop with [`SolverError::Interrupted`] once a column reaches this
    /// iteration (after saving, if it falls on the interval).
    pub halt_after: Option<u64>,
}

impl CheckpointConfig {
    pub const DEFAULT_INTERVAL: u64 = 1 << 14;

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointConfig {
            dir: dir.into(),
            interval: Self::DEFAULT_INTERVAL,
            halt_after: None,
        }
    }
}

/// A checkpoint directory bound to one run's parameters.
pub(crate) struct Checkpointer {
    pub(crate) config: CheckpointConfig,
    pub(crate) modulus: PrimeModulus,
    pub(crate) m: usize,
    /// True when `meta.txt` matched and column files may be resumed.
    resuming: bool,
}

impl Checkpointer {
    pub(crate) fn open(
        config: &CheckpointConfig,
        meta: &CheckpointMeta,
        modulus: &PrimeModulus,
    ) -> Result<Self, SolverError> {
        let meta_path = config.dir.join("meta.txt");
        let existing = fs::read_to_string(&meta_path)
            .ok()
            .and_then(|t| CheckpointMeta::parse(&t));
        let resuming = existing.as_ref() == Some(meta);
        if !resuming {
            for sub in ["seq", "iter"] {
                let p = config.dir.join(sub);
                if p.exists() {
                    fs::remove_dir_all(&p)?;
                }
            }
        }
        fs::create_dir_all(config.dir.join("seq"))?;
        fs::create_dir_all(config.dir.join("iter"))?;
        if !resuming {
            let text = meta.to_text();
            write_atomic(&meta_path, |w| Ok(w.write_all(text.as_bytes())?))?;
        }
        Ok(Checkpointer {
            config: config.clone(),
            modulus: modulus.clone(),
            m: meta.m,
            resuming,
        })
    }

    fn seq_path(&self, col: usize) -> PathBuf {
        self.config.dir.join("seq").join(format!("col_{col}.sldq"))
    }

    fn iter_path(&self, col: usize) -> PathBuf {
        self.config.dir.join("iter").join(format!("col_{col}.sldv"))
    }

    pub(crate) fn save(
        &self,
        col: usize,
        terms: &[Vec<Residue>],
        v: &[Residue],
    ) -> Result<(), SolverError> {
        store_sequence(&self.seq_path(col), &self.modulus, self.m, 1, terms)?;
        store_vector(&self.modulus, v, &self.iter_path(col))?;
        Ok(())
    }

    /// Saved terms and iterate of column `col`, if any.
    pub(crate) fn load(&self, col: usize, dim: usize) -> Result<Option<Saved>, SolverError> {
        let (sp, ip) = (self.seq_path(col), self.iter_path(col));
        if !self.resuming || !sp.exists() || !ip.exists() {
            return Ok(None);
        }
        let seq = load_sequence(&sp)?;
        let (vm, v) = load_vector(&ip)?;
        if seq.modulus != self.modulus || vm != self.modulus {
            return Err(SolverError::CheckpointMismatch(format!(
                "column {col}: modulus differs"
            )));
        }
        if seq.m != self.m || seq.n != 1 || seq.terms.is_empty() || v.len() != dim {
            return Err(SolverError::CheckpointMismatch(format!(
                "column {col}: shape differs"
            )));
        }
        Ok(Some((seq.terms, v)))
    }
}
