//! Weight-balancing permutations and the r×c block split.
//!
//! Columns are sorted by decreasing weight and dealt boustrophedon-style
//! into `c` equal groups; rows likewise into `r` groups. The dimension is
//! padded to a multiple of `lcm(r, c)`. Each padding column gets a pinned
//! row holding a single `+1`, so kernel vectors vanish on padding.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, WriteBytesExt};
use num_integer::Integer;
use thiserror::Error;

use crate::error::FormatError;
use crate::io::{expect_eof, open_read, read_header, read_u64_len, write_atomic, write_header};
use crate::modring::Residue;
use crate::spmatrix::{Coefficient, MatrixBuilder, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BalanceError {
    #[error("balancing needs a square matrix, got {0}×{1}")]
    NotSquare(usize, usize),
    #[error("permutations sized {got} do not match padded dimension {expected}")]
    PermutationSize { expected: usize, got: usize },
    #[error("every block is empty")]
    EmptySplit,
}

/// Node grid shape: `r` rows by `c` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub r: usize,
    pub c: usize,
}

impl GridSpec {
    pub fn new(r: usize, c: usize) -> Result<Self, String> {
        if r == 0 || c == 0 {
            return Err(format!("grid dimensions must be positive, got {r}x{c}"));
        }
        Ok(GridSpec { r, c })
    }

    pub fn nodes(&self) -> usize {
        self.r * self.c
    }

    /// Granularity of the padded dimension.
    pub fn granularity(&self) -> usize {
        self.r.lcm(&self.c)
    }

    /// Smallest multiple of the granularity that is at least `n`.
    pub fn padded_dim(&self, n: usize) -> usize {
        n.div_ceil(self.granularity()) * self.granularity()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.r, self.c)
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid must look like RxC, got {s:?}"))?;
        let r = a
            .trim()
            .parse()
            .map_err(|_| format!("bad grid rows in {s:?}"))?;
        let c = b
            .trim()
            .parse()
            .map_err(|_| format!("bad grid columns in {s:?}"))?;
        GridSpec::new(r, c)
    }
}

/// Row and column permutations on `[0, n_padded)`, stored as
/// `perm[new] = old`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationPair {
    pub n_padded: usize,
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
}

impl PermutationPair {
    pub fn identity(n_padded: usize) -> Self {
        PermutationPair {
            n_padded,
            row_perm: (0..n_padded).collect(),
            col_perm: (0..n_padded).collect(),
        }
    }

    pub fn is_valid(&self) -> bool {
        is_permutation(&self.row_perm, self.n_padded)
            && is_permutation(&self.col_perm, self.n_padded)
    }

    /// `inverse[old] = new`.
    pub fn col_inverse(&self) -> Vec<usize> {
        inverse(&self.col_perm)
    }

    pub fn row_inverse(&self) -> Vec<usize> {
        inverse(&self.row_perm)
    }

    /// `out[new] = u[col_perm[new]]` (the column permutation applied to `u`).
    pub fn permute_cols<T: Clone>(&self, u: &[T]) -> Vec<T> {
        self.col_perm.iter().map(|&o| u[o].clone()).collect()
    }

    /// Inverse of [`PermutationPair::permute_cols`].
    pub fn unpermute_cols<T: Clone>(&self, v: &[T]) -> Vec<T> {
        let mut out = v.to_vec();
        for (new, &old) in self.col_perm.iter().enumerate() {
            out[old] = v[new].clone();
        }
        out
    }

    pub fn permute_rows<T: Clone>(&self, v: &[T]) -> Vec<T> {
        self.row_perm.iter().map(|&o| v[o].clone()).collect()
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (new, &old) in p.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Deals `n` real items with the given weights into `groups` contiguous
/// ranges of `[0, n_padded)`; padding indices `n..n_padded` stay in place.
fn serpentine_deal(weights: &[usize], groups: usize, n_padded: usize) -> Vec<usize> {
    let n = weights.len();
    let size = n_padded / groups;
    let capacity: Vec<usize> = (0..groups)
        .map(|g| {
            let lo = g * size;
            let hi = (g + 1) * size;
            hi.min(n).saturating_sub(lo)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    let cycle = 2 * groups;
    let mut pos = 0usize;
    for item in order {
        loop {
            let k = pos % cycle;
            let g = if k < groups { k } else { cycle - 1 - k };
            pos += 1;
            if members[g].len() < capacity[g] {
                members[g].push(item);
                break;
            }
        }
    }
    let mut perm = Vec::with_capacity(n_padded);
    for mut group in members {
        group.sort_unstable();
        perm.extend(group);
    }
    perm.extend(n..n_padded);
    perm
}

/// Balancing permutations for `a` on grid `g`.
pub fn balance_permutation(a: &SparseMatrix, g: GridSpec) -> Result<PermutationPair, BalanceError> {
    if !a.is_square() {
        return Err(BalanceError::NotSquare(a.nrows(), a.ncols()));
    }
    let n_padded = g.padded_dim(a.nrows());
    Ok(PermutationPair {
        n_padded,
        row_perm: serpentine_deal(&a.row_weights(), g.r, n_padded),
        col_perm: serpentine_deal(&a.column_weights(), g.c, n_padded),
    })
}

/// Identity permutations with the padding the grid requires.
pub fn identity_permutation(a: &SparseMatrix, g: GridSpec) -> PermutationPair {
    PermutationPair::identity(g.padded_dim(a.nrows().max(a.ncols())))
}

/// The permuted, padded matrix cut into `r × c` blocks.
#[derive(Clone, Debug)]
pub struct BlockSplit {
    pub grid: GridSpec,
    pub n: usize,
    pub n_padded: usize,
    pub perm: PermutationPair,
    /// Row-major: block `(i, j)` is `blocks[i * c + j]`.
    pub blocks: Vec<SparseMatrix>,
    pub pad_rows: usize,
    pub pad_cols: usize,
    /// `(row, col)` of each pinned `+1`, in unpermuted padded coordinates.
    pub pin_rows: Vec<(usize, usize)>,
}

impl BlockSplit {
    pub fn block(&self, i: usize, j: usize) -> &SparseMatrix {
        &self.blocks[i * self.grid.c + j]
    }

    pub fn block_rows(&self) -> usize {
        self.n_padded / self.grid.r
    }

    pub fn block_cols(&self) -> usize {
        self.n_padded / self.grid.c
    }

    /// Reassembles the permuted, padded matrix from the blocks.
    pub fn assemble(&self) -> SparseMatrix {
        let m = self.blocks[0].modulus();
        let (br, bc) = (self.block_rows(), self.block_cols());
        let mut b = MatrixBuilder::new(m, self.n_padded);
        for i in 0..self.grid.r {
            for local in 0..br {
                let mut row = Vec::new();
                for j in 0..self.grid.c {
                    for (c, v) in self.block(i, j).row_values(local) {
                        row.push((j * bc + c, v));
                    }
                }
                b.push_values(row).expect("assembled row is valid");
            }
        }
        b.build().expect("assembled matrix is valid")
    }

    pub fn block_nnz(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nnz()).collect()
    }
}

/// Square `n_padded × n_padded` matrix: `a` plus one pinned `+1` row per
/// padding column. Dense columns are folded into the sparse part.
pub fn pad_matrix(a: &SparseMatrix, n_padded: usize) -> SparseMatrix {
    let n = a.nrows();
    let mut b = MatrixBuilder::new(a.modulus(), n_padded).with_c_max(a.c_max());
    for i in 0..n {
        b.push_values(a.row_values(i))
            .expect("rows of a valid matrix");
    }
    for p in n..n_padded {
        b.push_coeffs(vec![(p, Coefficient::PlusOne)])
            .expect("pinned entry");
    }
    b.build().expect("padded matrix is valid")
}

/// Applies `p` to the padded matrix and cuts it into blocks.
pub fn split(
    a: &SparseMatrix,
    p: &PermutationPair,
    g: GridSpec,
) -> Result<BlockSplit, BalanceError> {
    if !a.is_square() {
        return Err(BalanceError::NotSquare(a.nrows(), a.ncols()));
    }
    let n = a.nrows();
    let n_padded = g.padded_dim(n);
    if p.n_padded != n_padded || p.row_perm.len() != n_padded || p.col_perm.len() != n_padded {
        return Err(BalanceError::PermutationSize {
            expected: n_padded,
            got: p.row_perm.len(),
        });
    }
    let m = a.modulus();
    let col_new = p.col_inverse();
    let (br, bc) = (n_padded / g.r, n_padded / g.c);
    let mut builders: Vec<MatrixBuilder> = (0..g.nodes())
        .map(|_| MatrixBuilder::new(m, bc).with_c_max(a.c_max()))
        .collect();
    let mut parts: Vec<Vec<(usize, Residue)>> = vec![Vec::new(); g.c];
    for (new_row, &old_row) in p.row_perm.iter().enumerate() {
        let i = new_row / br;
        let entries: Vec<(usize, Residue)> = if old_row < n {
            a.row_values(old_row)
        } else {
            vec![(old_row, m.one())]
        };
        parts.iter_mut().for_each(|x| x.clear());
        for (old_col, v) in entries {
            let nc = col_new[old_col];
            parts[nc / bc].push((nc % bc, v));
        }
        for (j, part) in parts.iter_mut().enumerate() {
            builders[i * g.c + j]
                .push_values(std::mem::take(part))
                .expect("block row is valid");
        }
    }
    let blocks = builders
        .into_iter()
        .map(|b| b.build().expect("block is valid"))
        .collect();
    Ok(BlockSplit {
        grid: g,
        n,
        n_padded,
        perm: p.clone(),
        blocks,
        pad_rows: n_padded - n,
        pad_cols: n_padded - n,
        pin_rows: (n..n_padded).map(|k| (k, k)).collect(),
    })
}

/// Largest block non-zero count divided by the mean.
pub fn imbalance(bs: &BlockSplit) -> Result<f64, BalanceError> {
    imbalance_of(&bs.block_nnz())
}

pub fn imbalance_of(block_nnz: &[usize]) -> Result<f64, BalanceError> {
    let total: usize = block_nnz.iter().sum();
    if total == 0 {
        return Err(BalanceError::EmptySplit);
    }
    let max = *block_nnz.iter().max().expect("non-empty");
    Ok(max as f64 * block_nnz.len() as f64 / total as f64)
}

const MAGIC: &[u8; 4] = b"SLDP";

pub fn write_permutation(w: &mut dyn Write, p: &PermutationPair) -> Result<(), FormatError> {
    write_header(w, MAGIC)?;
    w.write_u64::<LittleEndian>(p.n_padded as u64)?;
    for &x in p.row_perm.iter().chain(&p.col_perm) {
        w.write_u64::<LittleEndian>(x as u64)?;
    }
    Ok(())
}

pub fn read_permutation(r: &mut dyn Read) -> Result<PermutationPair, FormatError> {
    read_header(r, MAGIC)?;
    let n = read_u64_len(r)?;
    let read = |r: &mut dyn Read| -> Result<Vec<usize>, FormatError> {
        let mut v = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            v.push(read_u64_len(r)?);
        }
        Ok(v)
    };
    let row_perm = read(r)?;
    let col_perm = read(r)?;
    expect_eof(r)?;
    let p = PermutationPair {
        n_padded: n,
        row_perm,
        col_perm,
    };
    if !p.is_valid() {
        return Err(FormatError::Invariant("not a permutation".into()));
    }
    Ok(p)
}

pub fn store_permutation(p: &PermutationPair, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, |w| write_permutation(w, p))
}

pub fn load_permutation(path: &Path) -> Result<PermutationPair, FormatError> {
    read_permutation(&mut open_read(path)?)
}
