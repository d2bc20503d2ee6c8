//! CSR-style sparse matrices over Z/ℓZ with coefficient classes.
//!
//! Each stored entry carries the smallest class that represents its value:
//! ±1, a small signed word, or a full residue kept in a side table. A few
//! dense columns may be attached; they always occupy the highest column
//! indices, so `col_idx` of the sparse part never references them.

mod format;
mod spmv;
mod stats;

use num_bigint::BigUint;

use crate::error::MatrixError;
use crate::modring::{PrimeModulus, Residue};

pub use format::{
    load_matrix, load_vector, read_matrix, read_vector, store_matrix, store_vector, write_matrix,
    write_vector,
};
pub use spmv::{spmv_sequential, SpmvKernel};
pub use stats::{matrix_stats, MatrixStats};

/// Default bound on the magnitude of a `Small` coefficient.
pub const DEFAULT_C_MAX: u64 = (1 << 31) - 1;

/// Value of one matrix entry, tagged with its class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Coefficient {
    PlusOne,
    MinusOne,
    /// Signed machine-word value, never 0 or ±1 modulo ℓ.
    Small(i32),
    Full(Residue),
}

impl Coefficient {
    pub fn value(&self, m: &PrimeModulus) -> Residue {
        match self {
            Coefficient::PlusOne => m.one(),
            Coefficient::MinusOne => m.from_i64(-1),
            Coefficient::Small(v) => m.from_i64(*v as i64),
            Coefficient::Full(r) => r.clone(),
        }
    }

    /// Smallest class representing `v`, or `None` for zero.
    pub fn classify(m: &PrimeModulus, v: &Residue, c_max: u64) -> Option<Coefficient> {
        if v.is_zero() {
            return None;
        }
        let bound = c_max.min(i32::MAX as u64);
        Some(match m.as_small(v, bound) {
            Some(1) => Coefficient::PlusOne,
            Some(-1) => Coefficient::MinusOne,
            Some(s) => Coefficient::Small(s as i32),
            None => {
                if v == &m.one() {
                    Coefficient::PlusOne
                } else if v == &m.from_i64(-1) {
                    Coefficient::MinusOne
                } else {
                    Coefficient::Full(v.clone())
                }
            }
        })
    }
}

/// Compact per-entry code; `Full` indexes the matrix's full-value table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Code {
    PlusOne,
    MinusOne,
    Small(i32),
    Full(u32),
}

/// A dense column of `nrows` residues (zeros allowed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseColumn {
    pub col: usize,
    pub values: Vec<Residue>,
}

/// The matrix `A`: `nrows × ncols`, where `ncols` counts every column,
/// dense ones included.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    modulus: PrimeModulus,
    nrows: usize,
    ncols: usize,
    c_max: u64,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    codes: Vec<Code>,
    full: Vec<Residue>,
    dense: Vec<DenseColumn>,
}

/// Borrowed sparse part of one row.
#[derive(Clone, Copy)]
pub(crate) struct RowView<'a> {
    pub cols: &'a [u32],
    pub codes: &'a [Code],
}

impl SparseMatrix {
    pub fn modulus(&self) -> &PrimeModulus {
        &self.modulus
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Columns addressable by the CSR part.
    pub fn sparse_ncols(&self) -> usize {
        self.ncols - self.dense.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn c_max(&self) -> u64 {
        self.c_max
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn dense_columns(&self) -> &[DenseColumn] {
        &self.dense
    }

    /// Entries in the CSR part.
    pub fn sparse_nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Non-zero entries, dense columns included.
    pub fn nnz(&self) -> usize {
        self.sparse_nnz()
            + self
                .dense
                .iter()
                .map(|d| d.values.iter().filter(|v| !v.is_zero()).count())
                .sum::<usize>()
    }

    pub(crate) fn row_view(&self, i: usize) -> RowView<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        RowView {
            cols: &self.col_idx[a..b],
            codes: &self.codes[a..b],
        }
    }

    pub(crate) fn full_values(&self) -> &[Residue] {
        &self.full
    }

    pub(crate) fn decode(&self, code: Code) -> Coefficient {
        match code {
            Code::PlusOne => Coefficient::PlusOne,
            Code::MinusOne => Coefficient::MinusOne,
            Code::Small(v) => Coefficient::Small(v),
            Code::Full(i) => Coefficient::Full(self.full[i as usize].clone()),
        }
    }

    pub(crate) fn code_value(&self, code: Code) -> Residue {
        match code {
            Code::PlusOne => self.modulus.one(),
            Code::MinusOne => self.modulus.from_i64(-1),
            Code::Small(v) => self.modulus.from_i64(v as i64),
            Code::Full(i) => self.full[i as usize].clone(),
        }
    }

    /// Non-zeros of the sparse part of row `i`.
    pub fn sparse_row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// All non-zero entries of row `i` as `(column, coefficient)`, ascending.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, Coefficient)> {
        let view = self.row_view(i);
        let mut out: Vec<(usize, Coefficient)> = view
            .cols
            .iter()
            .zip(view.codes)
            .map(|(&c, &code)| (c as usize, self.decode(code)))
            .collect();
        for d in &self.dense {
            if let Some(c) = Coefficient::classify(&self.modulus, &d.values[i], self.c_max) {
                out.push((d.col, c));
            }
        }
        out
    }

    /// Row `i` as `(column, value)` pairs, ascending, zeros omitted.
    pub fn row_values(&self, i: usize) -> Vec<(usize, Residue)> {
        let view = self.row_view(i);
        let mut out: Vec<(usize, Residue)> = view
            .cols
            .iter()
            .zip(view.codes)
            .map(|(&c, &code)| (c as usize, self.code_value(code)))
            .collect();
        for d in &self.dense {
            if !d.values[i].is_zero() {
                out.push((d.col, d.values[i].clone()));
            }
        }
        out
    }

    /// Number of non-zeros in row `i`, dense part included.
    pub fn row_weight(&self, i: usize) -> usize {
        self.sparse_row_len(i) + self.dense.iter().filter(|d| !d.values[i].is_zero()).count()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        (0..self.nrows).map(|i| self.row_weight(i)).collect()
    }

    pub fn max_row_weight(&self) -> usize {
        (0..self.nrows)
            .map(|i| self.sparse_row_len(i) + self.dense.len())
            .max()
            .unwrap_or(0)
    }

    pub fn column_weights(&self) -> Vec<usize> {
        let mut w = vec![0usize; self.ncols];
        for &c in &self.col_idx {
            w[c as usize] += 1;
        }
        for d in &self.dense {
            w[d.col] = d.values.iter().filter(|v| !v.is_zero()).count();
        }
        w
    }

    /// Largest small-coefficient magnitude present (at least 1).
    pub fn max_small_magnitude(&self) -> u64 {
        self.codes
            .iter()
            .filter_map(|c| match c {
                Code::Small(v) => Some(v.unsigned_abs() as u64),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    }

    /// Count of ±1 entries over the whole matrix.
    pub fn pm1_count(&self) -> usize {
        let sparse = self
            .codes
            .iter()
            .filter(|c| matches!(c, Code::PlusOne | Code::MinusOne))
            .count();
        let one = self.modulus.one();
        let minus = self.modulus.from_i64(-1);
        let dense: usize = self
            .dense
            .iter()
            .map(|d| {
                d.values
                    .iter()
                    .filter(|v| **v == one || **v == minus)
                    .count()
            })
            .sum();
        sparse + dense
    }

    /// Entry `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> Residue {
        if let Some(d) = self.dense.iter().find(|d| d.col == j) {
            return d.values[i].clone();
        }
        let view = self.row_view(i);
        match view.cols.binary_search(&(j as u32)) {
            Ok(p) => self.code_value(view.codes[p]),
            Err(_) => self.modulus.zero(),
        }
    }

    /// `n × n` identity pattern (every entry `+1`).
    pub fn identity(modulus: &PrimeModulus, n: usize) -> SparseMatrix {
        let mut b = MatrixBuilder::new(modulus, n);
        for i in 0..n {
            b.push_coeffs(vec![(i, Coefficient::PlusOne)])
                .expect("diagonal entry");
        }
        b.build().expect("identity is valid")
    }

    /// All-zero `nrows × ncols` matrix.
    pub fn zero(modulus: &PrimeModulus, nrows: usize, ncols: usize) -> SparseMatrix {
        let mut b = MatrixBuilder::new(modulus, ncols);
        for _ in 0..nrows {
            b.push_values(Vec::new()).expect("empty row");
        }
        b.build().expect("zero matrix is valid")
    }

    pub fn from_dense(modulus: &PrimeModulus, rows: &[Vec<Residue>], ncols: usize) -> SparseMatrix {
        let mut b = MatrixBuilder::new(modulus, ncols);
        for row in rows {
            let entries = row
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(j, v)| (j, v.clone()))
                .collect();
            b.push_values(entries).expect("dense row");
        }
        b.build().expect("dense conversion is valid")
    }

    pub fn to_dense(&self) -> Vec<Vec<Residue>> {
        let mut out = vec![vec![self.modulus.zero(); self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row_values(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Same matrix with dense columns folded into the sparse part.
    pub fn materialize_dense(&self) -> SparseMatrix {
        if self.dense.is_empty() {
            return self.clone();
        }
        let mut b = MatrixBuilder::new(&self.modulus, self.ncols).with_c_max(self.c_max);
        for i in 0..self.nrows {
            b.push_values(self.row_values(i))
                .expect("rows of a valid matrix");
        }
        b.build().expect("materialized matrix is valid")
    }

    /// Same values with every entry stored in the `Full` class.
    pub fn with_full_classes(&self) -> SparseMatrix {
        let mut out = self.clone();
        out.full.clear();
        for k in 0..out.codes.len() {
            let v = self.code_value(self.codes[k]);
            out.codes[k] = Code::Full(out.full.len() as u32);
            out.full.push(v);
        }
        out
    }

    /// Rows selected and reordered: output row `k` is input row `rows[k]`.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut b = MatrixBuilder::new(&self.modulus, self.ncols).with_c_max(self.c_max);
        for &r in rows {
            b.push_values(self.row_values(r))
                .expect("row of a valid matrix");
        }
        b.build().expect("row selection is valid")
    }
}

impl PartialEq for SparseMatrix {
    fn eq(&self, other: &Self) -> bool {
        if self.modulus != other.modulus
            || self.nrows != other.nrows
            || self.ncols != other.ncols
            || self.row_ptr != other.row_ptr
            || self.col_idx != other.col_idx
            || self.dense != other.dense
        {
            return false;
        }
        self.codes
            .iter()
            .zip(&other.codes)
            .all(|(&a, &b)| self.decode(a) == other.decode(b))
    }
}

impl Eq for SparseMatrix {}

/// Incremental row-by-row constructor that canonicalizes coefficient classes.
pub struct MatrixBuilder {
    modulus: PrimeModulus,
    ncols: usize,
    c_max: u64,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    codes: Vec<Code>,
    full: Vec<Residue>,
    dense: Vec<DenseColumn>,
}

impl MatrixBuilder {
    pub fn new(modulus: &PrimeModulus, ncols: usize) -> Self {
        MatrixBuilder {
            modulus: modulus.clone(),
            ncols,
            c_max: DEFAULT_C_MAX,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            codes: Vec::new(),
            full: Vec::new(),
            dense: Vec::new(),
        }
    }

    pub fn with_c_max(mut self, c_max: u64) -> Self {
        self.c_max = c_max.clamp(1, DEFAULT_C_MAX);
        self
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn reserve(&mut self, entries: usize) {
        self.col_idx.reserve(entries);
        self.codes.reserve(entries);
    }

    fn push_coefficient(&mut self, col: usize, c: Coefficient) {
        self.col_idx.push(col as u32);
        self.codes.push(match c {
            Coefficient::PlusOne => Code::PlusOne,
            Coefficient::MinusOne => Code::MinusOne,
            Coefficient::Small(v) => Code::Small(v),
            Coefficient::Full(r) => {
                self.full.push(r);
                Code::Full(self.full.len() as u32 - 1)
            }
        });
    }

    /// Appends a row of `(column, value)` pairs; duplicates are summed and
    /// zeros dropped. Entries in dense columns must not be given here.
    pub fn push_values(&mut self, mut entries: Vec<(usize, Residue)>) -> Result<(), MatrixError> {
        entries.sort_by_key(|e| e.0);
        let m = self.modulus.clone();
        let mut merged: Vec<(usize, Residue)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            if !m.is_canonical(&v) {
                return Err(MatrixError::Invalid(format!(
                    "non-canonical value in column {c}"
                )));
            }
            match merged.last_mut() {
                Some((pc, pv)) if *pc == c => *pv = m.add(pv, &v),
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            if c >= self.ncols {
                return Err(MatrixError::Invalid(format!(
                    "column {c} out of range {}",
                    self.ncols
                )));
            }
            if let Some(coeff) = Coefficient::classify(&m, &v, self.c_max) {
                self.push_coefficient(c, coeff);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        Ok(())
    }

    /// Appends a row of small signed integers (reduced modulo ℓ).
    pub fn push_small(&mut self, entries: &[(usize, i64)]) -> Result<(), MatrixError> {
        let m = self.modulus.clone();
        self.push_values(entries.iter().map(|&(c, v)| (c, m.from_i64(v))).collect())
    }

    /// Appends a row of explicit coefficients, re-canonicalizing classes.
    pub fn push_coeffs(&mut self, entries: Vec<(usize, Coefficient)>) -> Result<(), MatrixError> {
        let m = self.modulus.clone();
        self.push_values(entries.into_iter().map(|(c, v)| (c, v.value(&m))).collect())
    }

    /// Appends a row whose entries are already sorted, distinct, non-zero
    /// and canonically classed.
    pub(crate) fn push_raw_row(&mut self, cols: &[u32], coeffs: Vec<Coefficient>) {
        for (&c, k) in cols.iter().zip(coeffs) {
            self.push_coefficient(c as usize, k);
        }
        self.row_ptr.push(self.col_idx.len());
    }

    /// Attaches a dense column; `col` must be among the top column indices.
    pub fn dense_column(&mut self, col: usize, values: Vec<Residue>) {
        self.dense.push(DenseColumn { col, values });
    }

    pub fn build(mut self) -> Result<SparseMatrix, MatrixError> {
        let nrows = self.row_ptr.len() - 1;
        self.dense.sort_by_key(|d| d.col);
        let d = self.dense.len();
        if d > self.ncols {
            return Err(MatrixError::Invalid(
                "more dense columns than columns".into(),
            ));
        }
        let sparse_ncols = self.ncols - d;
        for (t, dc) in self.dense.iter().enumerate() {
            if dc.col != sparse_ncols + t {
                return Err(MatrixError::Invalid(format!(
                    "dense column {} is not among the top {d} indices",
                    dc.col
                )));
            }
            if dc.values.len() != nrows {
                return Err(MatrixError::Invalid(format!(
                    "dense column {} has {} values for {nrows} rows",
                    dc.col,
                    dc.values.len()
                )));
            }
            if dc.values.iter().any(|v| !self.modulus.is_canonical(v)) {
                return Err(MatrixError::Invalid("non-canonical dense value".into()));
            }
        }
        if let Some(&c) = self.col_idx.iter().find(|&&c| c as usize >= sparse_ncols) {
            return Err(MatrixError::Invalid(format!(
                "sparse entry in column {c} collides with the dense block"
            )));
        }
        Ok(SparseMatrix {
            modulus: self.modulus,
            nrows,
            ncols: self.ncols,
            c_max: self.c_max,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            codes: self.codes,
            full: self.full,
            dense: self.dense,
        })
    }
}

/// Dense `nrows × ncols` product oracle for tests and small checks.
pub fn dense_mat_vec(m: &PrimeModulus, a: &[Vec<Residue>], u: &[Residue]) -> Vec<Residue> {
    a.iter()
        .map(|row| {
            let mut acc = BigUint::default();
            for (x, y) in row.iter().zip(u) {
                acc += x.to_biguint() * y.to_biguint();
            }
            m.from_biguint(&acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_are_canonical() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let mut b = MatrixBuilder::new(&m, 5).with_c_max(100);
        b.push_small(&[(0, 1), (1, -1), (2, 7), (3, -50), (4, 500)])
            .unwrap();
        let a = b.build().unwrap();
        let e = a.row_entries(0);
        assert_eq!(e[0].1, Coefficient::PlusOne);
        assert_eq!(e[1].1, Coefficient::MinusOne);
        assert_eq!(e[2].1, Coefficient::Small(7));
        assert_eq!(e[3].1, Coefficient::Small(-50));
        assert_eq!(e[4].1, Coefficient::Full(m.from_u64(500)));
    }

    #[test]
    fn duplicates_merge_and_zeros_vanish() {
        let m = PrimeModulus::from_prime_u64(7).unwrap();
        let mut b = MatrixBuilder::new(&m, 3);
        b.push_small(&[(2, 3), (0, 1), (2, 4), (1, 0)]).unwrap();
        let a = b.build().unwrap();
        assert_eq!(a.sparse_nnz(), 1);
        assert_eq!(a.row_entries(0), vec![(0, Coefficient::PlusOne)]);
    }

    #[test]
    fn dense_columns_must_be_on_top() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let mut b = MatrixBuilder::new(&m, 3);
        b.push_small(&[(0, 2)]).unwrap();
        b.dense_column(1, vec![m.one()]);
        assert!(b.build().is_err());

        let mut b = MatrixBuilder::new(&m, 3);
        b.push_small(&[(2, 2)]).unwrap();
        b.dense_column(2, vec![m.one()]);
        assert!(b.build().is_err(), "sparse entry inside the dense block");

        let mut b = MatrixBuilder::new(&m, 3);
        b.push_small(&[(0, 2)]).unwrap();
        b.dense_column(2, vec![m.from_u64(5)]);
        let a = b.build().unwrap();
        assert_eq!(a.sparse_ncols(), 2);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.column_weights(), vec![1, 0, 1]);
        assert_eq!(a.get(0, 2), m.from_u64(5));
    }
}
