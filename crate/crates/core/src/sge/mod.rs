//! Structured Gaussian elimination.
//!
//! Eliminates columns of weight at most two, in priority order:
//! empty columns are pinned to zero, singleton columns are solved from
//! their only row (row and column removed), and the lowest-index weight-2
//! column is reduced to a singleton by adding a multiple of its lighter row
//! to the other one. Every step is recorded so a kernel vector of the
//! reduced matrix can be lifted back to one of the original.

mod format;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::MatrixError;
use crate::modring::{PrimeModulus, Residue};
use crate::spmatrix::{MatrixBuilder, SparseMatrix};

pub use format::{load_transcript, read_transcript, store_transcript, write_transcript};

/// Accepted steps between evaluations of the memory stop rule.
pub const CHECK_INTERVAL: usize = 1024;

/// Storage estimate per non-zero: a 4-byte index and an 8-byte coefficient.
pub const BYTES_PER_ENTRY: u64 = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SgeStep {
    DropZeroColumn {
        col: usize,
    },
    SolveSingletonColumn {
        row: usize,
        col: usize,
        pivot: Residue,
        others: Vec<(usize, Residue)>,
    },
    /// `row[target] += multiplier · row[source]`.
    CombineRows {
        target: usize,
        source: usize,
        multiplier: Residue,
    },
}

/// Replayable elimination log, all indices in original coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SgeTranscript {
    pub modulus: PrimeModulus,
    pub steps: Vec<SgeStep>,
    pub original_nrows: usize,
    pub original_ncols: usize,
    /// Reduced row index → original row index.
    pub row_map: Vec<usize>,
    /// Reduced column index → original column index.
    pub column_map: Vec<usize>,
    pub fixed_zero_cols: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SgeOptions {
    /// Defaults to four times the input's average row weight.
    pub max_fill_row_weight: Option<usize>,
    /// Stop once `nnz · 12` bytes fit in this budget.
    pub memory_budget_bytes: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    NoRuleApplies,
    CostWouldIncrease,
    FillLimit,
    MemoryBudgetMet,
}

#[derive(Clone, Debug, Serialize)]
pub struct SgeReport {
    pub stop_reason: StopReason,
    pub dropped_zero_cols: usize,
    pub solved_singletons: usize,
    pub combined_rows: usize,
    /// Projected cost before the first and after each accepted step.
    pub cost_history: Vec<u128>,
}

pub struct SgeOutcome {
    pub matrix: SparseMatrix,
    pub transcript: SgeTranscript,
    pub report: SgeReport,
}

/// `nrows · nnz`, proportional to the iterative solver's work.
pub fn projected_cost(a: &SparseMatrix) -> u128 {
    a.nrows() as u128 * a.nnz() as u128
}

struct Work {
    m: PrimeModulus,
    rows: Vec<Option<Vec<(u32, Residue)>>>,
    col_rows: Vec<Vec<u32>>,
    col_alive: Vec<bool>,
    by_weight: [BTreeSet<u32>; 3],
    nrows: usize,
    nnz: usize,
}

impl Work {
    fn new(a: &SparseMatrix) -> Self {
        let m = a.modulus().clone();
        let mut rows = Vec::with_capacity(a.nrows());
        let mut col_rows = vec![Vec::new(); a.ncols()];
        let mut nnz = 0;
        for i in 0..a.nrows() {
            let r: Vec<(u32, Residue)> = a
                .row_values(i)
                .into_iter()
                .map(|(c, v)| (c as u32, v))
                .collect();
            for (c, _) in &r {
                col_rows[*c as usize].push(i as u32);
            }
            nnz += r.len();
            rows.push(Some(r));
        }
        let mut by_weight: [BTreeSet<u32>; 3] = Default::default();
        for (c, rs) in col_rows.iter().enumerate() {
            if rs.len() <= 2 {
                by_weight[rs.len()].insert(c as u32);
            }
        }
        Work {
            m,
            nrows: rows.len(),
            rows,
            col_rows,
            col_alive: vec![true; a.ncols()],
            by_weight,
            nnz,
        }
    }

    fn cost(&self) -> u128 {
        self.nrows as u128 * self.nnz as u128
    }

    fn reweigh(&mut self, c: u32, old: usize) {
        if old <= 2 {
            self.by_weight[old].remove(&c);
        }
        let new = self.col_rows[c as usize].len();
        if self.col_alive[c as usize] && new <= 2 {
            self.by_weight[new].insert(c);
        }
    }

    fn unlink(&mut self, c: u32, row: u32) {
        let list = &mut self.col_rows[c as usize];
        let old = list.len();
        if let Some(p) = list.iter().position(|&r| r == row) {
            list.swap_remove(p);
        }
        self.reweigh(c, old);
    }

    fn link(&mut self, c: u32, row: u32) {
        let old = self.col_rows[c as usize].len();
        self.col_rows[c as usize].push(row);
        self.reweigh(c, old);
    }

    fn kill_column(&mut self, c: u32) {
        let w = self.col_rows[c as usize].len();
        if w <= 2 {
            self.by_weight[w].remove(&c);
        }
        self.col_alive[c as usize] = false;
    }

    fn remove_row(&mut self, r: u32) -> Vec<(u32, Residue)> {
        let row = self.rows[r as usize].take().expect("row is alive");
        for (c, _) in &row {
            self.unlink(*c, r);
        }
        self.nrows -= 1;
        self.nnz -= row.len();
        row
    }

    fn coefficient(&self, r: u32, c: u32) -> &Residue {
        let row = self.rows[r as usize].as_ref().expect("row is alive");
        let p = row
            .binary_search_by_key(&c, |e| e.0)
            .expect("entry present");
        &row[p].1
    }

    /// `target + mult·source`, sorted, zeros dropped.
    fn combined(&self, target: u32, source: u32, mult: &Residue) -> Vec<(u32, Residue)> {
        let m = &self.m;
        let t = self.rows[target as usize].as_ref().expect("target alive");
        let s = self.rows[source as usize].as_ref().expect("source alive");
        let mut out = Vec::with_capacity(t.len() + s.len());
        let (mut i, mut j) = (0, 0);
        while i < t.len() || j < s.len() {
            let tc = t.get(i).map(|e| e.0).unwrap_or(u32::MAX);
            let sc = s.get(j).map(|e| e.0).unwrap_or(u32::MAX);
            if tc < sc {
                out.push(t[i].clone());
                i += 1;
            } else if sc < tc {
                out.push((sc, m.mul(mult, &s[j].1)));
                j += 1;
            } else {
                let v = m.add(&t[i].1, &m.mul(mult, &s[j].1));
                if !v.is_zero() {
                    out.push((tc, v));
                }
                i += 1;
                j += 1;
            }
        }
        out
    }

    fn replace_row(&mut self, r: u32, new_row: Vec<(u32, Residue)>) {
        let old = self.rows[r as usize].take().expect("row is alive");
        self.nnz = self.nnz - old.len() + new_row.len();
        let mut a = 0;
        let mut b = 0;
        while a < old.len() || b < new_row.len() {
            let oc = old.get(a).map(|e| e.0).unwrap_or(u32::MAX);
            let nc = new_row.get(b).map(|e| e.0).unwrap_or(u32::MAX);
            if oc < nc {
                self.unlink(oc, r);
                a += 1;
            } else if nc < oc {
                self.link(nc, r);
                b += 1;
            } else {
                a += 1;
                b += 1;
            }
        }
        self.rows[r as usize] = Some(new_row);
    }

    fn solve_singleton(&mut self, c: u32, steps: &mut Vec<SgeStep>) {
        let r = self.col_rows[c as usize][0];
        let row = self.remove_row(r);
        self.kill_column(c);
        let mut pivot = None;
        let mut others = Vec::with_capacity(row.len() - 1);
        for (cc, v) in row {
            if cc == c {
                pivot = Some(v);
            } else {
                others.push((cc as usize, v));
            }
        }
        steps.push(SgeStep::SolveSingletonColumn {
            row: r as usize,
            col: c as usize,
            pivot: pivot.expect("singleton column entry"),
            others,
        });
    }
}

/// Runs the elimination; the reduced matrix has compacted indices and no
/// separate dense block.
pub fn sge_reduce(a: &SparseMatrix, opts: &SgeOptions) -> SgeOutcome {
    let m = a.modulus().clone();
    let mut w = Work::new(a);
    let avg = if a.nrows() == 0 {
        0
    } else {
        w.nnz.div_ceil(a.nrows())
    };
    let max_fill = opts.max_fill_row_weight.unwrap_or(4 * avg.max(1));
    let mut steps = Vec::new();
    let mut fixed_zero_cols = Vec::new();
    let mut report = SgeReport {
        stop_reason: StopReason::NoRuleApplies,
        dropped_zero_cols: 0,
        solved_singletons: 0,
        combined_rows: 0,
        cost_history: vec![w.cost()],
    };
    let mut accepted = 0usize;
    loop {
        if accepted.is_multiple_of(CHECK_INTERVAL) {
            if let Some(budget) = opts.memory_budget_bytes {
                if w.nnz as u64 * BYTES_PER_ENTRY <= budget {
                    report.stop_reason = StopReason::MemoryBudgetMet;
                    break;
                }
            }
        }
        if let Some(&c) = w.by_weight[0].first() {
            w.kill_column(c);
            fixed_zero_cols.push(c as usize);
            steps.push(SgeStep::DropZeroColumn { col: c as usize });
            report.dropped_zero_cols += 1;
        } else if let Some(&c) = w.by_weight[1].first() {
            w.solve_singleton(c, &mut steps);
            report.solved_singletons += 1;
        } else if let Some(&c) = w.by_weight[2].first() {
            let (r1, r2) = (w.col_rows[c as usize][0], w.col_rows[c as usize][1]);
            let len = |r: u32| w.rows[r as usize].as_ref().map_or(0, |x| x.len());
            let (source, target) = if (len(r1), r1) <= (len(r2), r2) {
                (r1, r2)
            } else {
                (r2, r1)
            };
            let inv = m
                .inv(w.coefficient(source, c))
                .expect("stored coefficients are non-zero");
            let mult = m.neg(&m.mul(w.coefficient(target, c), &inv));
            let new_target = w.combined(target, source, &mult);
            if new_target.len() > max_fill {
                report.stop_reason = StopReason::FillLimit;
                break;
            }
            let nnz_after = w.nnz - len(target) - len(source) + new_target.len();
            let cost_after = (w.nrows as u128 - 1) * nnz_after as u128;
            if cost_after > w.cost() {
                report.stop_reason = StopReason::CostWouldIncrease;
                break;
            }
            w.replace_row(target, new_target);
            steps.push(SgeStep::CombineRows {
                target: target as usize,
                source: source as usize,
                multiplier: mult,
            });
            report.combined_rows += 1;
            w.solve_singleton(c, &mut steps);
            report.solved_singletons += 1;
        } else {
            report.stop_reason = StopReason::NoRuleApplies;
            break;
        }
        accepted += 1;
        let cost = w.cost();
        debug_assert!(cost <= *report.cost_history.last().unwrap());
        report.cost_history.push(cost);
    }

    let column_map: Vec<usize> = (0..a.ncols()).filter(|&c| w.col_alive[c]).collect();
    let row_map: Vec<usize> = (0..a.nrows()).filter(|&r| w.rows[r].is_some()).collect();
    let matrix = compact(&m, &w.rows, &row_map, &column_map, a.ncols());
    SgeOutcome {
        matrix,
        transcript: SgeTranscript {
            modulus: m,
            steps,
            original_nrows: a.nrows(),
            original_ncols: a.ncols(),
            row_map,
            column_map,
            fixed_zero_cols,
        },
        report,
    }
}

fn compact(
    m: &PrimeModulus,
    rows: &[Option<Vec<(u32, Residue)>>],
    row_map: &[usize],
    column_map: &[usize],
    ncols: usize,
) -> SparseMatrix {
    let mut new_index = vec![u32::MAX; ncols];
    for (k, &c) in column_map.iter().enumerate() {
        new_index[c] = k as u32;
    }
    let mut b = MatrixBuilder::new(m, column_map.len());
    for &r in row_map {
        let row = rows[r].as_ref().expect("mapped rows are alive");
        let entries = row
            .iter()
            .map(|(c, v)| {
                let k = new_index[*c as usize];
                debug_assert_ne!(k, u32::MAX, "surviving row references a removed column");
                (k as usize, v.clone())
            })
            .collect();
        b.push_values(entries).expect("compacted row is valid");
    }
    b.build().expect("compacted matrix is valid")
}

impl SgeTranscript {
    pub fn reduced_nrows(&self) -> usize {
        self.row_map.len()
    }

    pub fn reduced_ncols(&self) -> usize {
        self.column_map.len()
    }

    /// Applies the recorded steps to `original`, yielding the reduced matrix.
    pub fn replay(&self, original: &SparseMatrix) -> Result<SparseMatrix, MatrixError> {
        if original.nrows() != self.original_nrows || original.ncols() != self.original_ncols {
            return Err(MatrixError::Invalid(
                "transcript does not match the matrix shape".into(),
            ));
        }
        let m = &self.modulus;
        let mut rows: Vec<Option<Vec<(u32, Residue)>>> = (0..original.nrows())
            .map(|i| {
                Some(
                    original
                        .row_values(i)
                        .into_iter()
                        .map(|(c, v)| (c as u32, v))
                        .collect(),
                )
            })
            .collect();
        for step in &self.steps {
            match step {
                SgeStep::DropZeroColumn { .. } => {}
                SgeStep::SolveSingletonColumn { row, .. } => rows[*row] = None,
                SgeStep::CombineRows {
                    target,
                    source,
                    multiplier,
                } => {
                    let s = rows[*source].clone().ok_or_else(|| {
                        MatrixError::Invalid(format!("row {source} used after removal"))
                    })?;
                    let t = rows[*target].take().ok_or_else(|| {
                        MatrixError::Invalid(format!("row {target} used after removal"))
                    })?;
                    let mut merged: Vec<(u32, Residue)> = t;
                    for (c, v) in s {
                        let add = m.mul(multiplier, &v);
                        match merged.binary_search_by_key(&c, |e| e.0) {
                            Ok(p) => merged[p].1 = m.add(&merged[p].1, &add),
                            Err(p) => merged.insert(p, (c, add)),
                        }
                    }
                    merged.retain(|e| !e.1.is_zero());
                    rows[*target] = Some(merged);
                }
            }
        }
        Ok(compact(
            m,
            &rows,
            &self.row_map,
            &self.column_map,
            self.original_ncols,
        ))
    }
}

/// Maps a kernel vector of the reduced matrix to one of the original.
pub fn lift_kernel(t: &SgeTranscript, w_reduced: &[Residue]) -> Result<Vec<Residue>, MatrixError> {
    lift(t, w_reduced, None)
}

/// Kernel vector of the original matrix with coordinate `col` set to 1,
/// where `col` is a column that elimination dropped as empty. Every other
/// free coordinate is 0.
pub fn lift_zero_column(t: &SgeTranscript, col: usize) -> Result<Vec<Residue>, MatrixError> {
    if !t.fixed_zero_cols.contains(&col) {
        return Err(MatrixError::Invalid(format!(
            "column {col} was not dropped as empty"
        )));
    }
    let zero = vec![t.modulus.zero(); t.reduced_ncols()];
    lift(t, &zero, Some(col))
}

fn lift(
    t: &SgeTranscript,
    w_reduced: &[Residue],
    unit: Option<usize>,
) -> Result<Vec<Residue>, MatrixError> {
    if w_reduced.len() != t.reduced_ncols() {
        return Err(MatrixError::DimensionMismatch {
            expected: t.reduced_ncols(),
            got: w_reduced.len(),
        });
    }
    let m = &t.modulus;
    let mut w = vec![m.zero(); t.original_ncols];
    for (k, &c) in t.column_map.iter().enumerate() {
        w[c] = w_reduced[k].clone();
    }
    for step in t.steps.iter().rev() {
        match step {
            SgeStep::DropZeroColumn { col } => {
                w[*col] = if unit == Some(*col) {
                    m.one()
                } else {
                    m.zero()
                };
            }
            SgeStep::SolveSingletonColumn {
                col, pivot, others, ..
            } => {
                let mut acc = m.zero();
                for (c, v) in others {
                    acc = m.add(&acc, &m.mul(v, &w[*c]));
                }
                let inv = m.inv(pivot).map_err(MatrixError::Arith)?;
                w[*col] = m.neg(&m.mul(&inv, &acc));
            }
            SgeStep::CombineRows { .. } => {}
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_reduces_to_nothing() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let out = sge_reduce(&SparseMatrix::identity(&m, 5), &SgeOptions::default());
        assert_eq!(out.matrix.nrows(), 0);
        assert_eq!(out.matrix.ncols(), 0);
        let w = lift_kernel(&out.transcript, &[]).unwrap();
        assert!(w.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn zero_column_pinned() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let mut b = MatrixBuilder::new(&m, 3);
        b.push_small(&[(0, 1), (2, 1)]).unwrap();
        b.push_small(&[(0, 1), (2, 1)]).unwrap();
        b.push_small(&[(0, 2), (2, 2)]).unwrap();
        let out = sge_reduce(&b.build().unwrap(), &SgeOptions::default());
        assert_eq!(out.transcript.fixed_zero_cols, vec![1]);
        assert_eq!(out.transcript.steps[0], SgeStep::DropZeroColumn { col: 1 });
    }

    #[test]
    fn empty_transcript_lifts_identically() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let t = SgeTranscript {
            modulus: m.clone(),
            steps: vec![],
            original_nrows: 3,
            original_ncols: 3,
            row_map: vec![0, 1, 2],
            column_map: vec![0, 1, 2],
            fixed_zero_cols: vec![],
        };
        let w: Vec<Residue> = (1..4).map(|i| m.from_u64(i)).collect();
        assert_eq!(lift_kernel(&t, &w).unwrap(), w);
        assert!(lift_kernel(&t, &w[..2]).is_err());
    }
}
