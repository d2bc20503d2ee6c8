//! Kernel vectors from linear generators.

use super::lingen::Generators;
use super::{BatchMeter, BlockVector, KernelVector, LinearOperator, ProgressSink};
use crate::error::SolverError;
use crate::modring::{PrimeModulus, Residue};

#[derive(Clone, Debug)]
pub struct MksolRun {
    pub kernel: KernelVector,
    /// Products spent in the Horner chain: `deg G` where `F = X^s·G`.
    pub horner_spmvs: u64,
    /// Products spent looking for the last non-zero `Aᵗ·G(A)·Y`, the final
    /// (zero) one included.
    pub tail_spmvs: u64,
    pub valuation: usize,
}

fn combine(m: &PrimeModulus, y: &BlockVector, coeffs_mont: &[Residue], out: &mut [Residue]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = m.zero();
        for (c, col) in coeffs_mont.iter().zip(&y.columns) {
            if !c.is_zero() {
                m.add_assign(&mut acc, &m.mul_mont_plain(c, &col[k]));
            }
        }
        *slot = acc;
    }
}

fn is_zero(v: &[Residue]) -> bool {
    v.iter().all(|x| x.is_zero())
}

/// `w = Σ_j G^(j)(A)·y^(j)` by one Horner chain, where `F = X^s·G` strips
/// the common power of `X`, then `w ← A·w` while the next product is
/// non-zero, at most `s` times.
pub fn mksol_block(
    op: &dyn LinearOperator,
    y: &BlockVector,
    gen: &Generators,
) -> Result<MksolRun, SolverError> {
    mksol_block_with(op, y, gen, None)
}

pub(crate) fn mksol_block_with(
    op: &dyn LinearOperator,
    y: &BlockVector,
    gen: &Generators,
    progress: Option<&ProgressSink>,
) -> Result<MksolRun, SolverError> {
    let m = op.modulus().clone();
    let dim = op.dim();
    if y.columns.len() != gen.n() {
        return Err(SolverError::DimensionMismatch {
            expected: gen.n(),
            got: y.columns.len(),
        });
    }
    if let Some(c) = y.columns.iter().find(|c| c.len() != dim) {
        return Err(SolverError::DimensionMismatch {
            expected: dim,
            got: c.len(),
        });
    }
    let s = gen.valuation();
    if s > gen.degree {
        return Err(SolverError::SolverFailure);
    }
    let top = gen.effective_degree();
    let coeff =
        |i: usize| -> Vec<Residue> { gen.coefficient(i).iter().map(|c| m.to_mont(c)).collect() };
    let mut session = op.session()?;
    let mut w = vec![m.zero(); dim];
    combine(&m, y, &coeff(top), &mut w);
    let mut horner = 0u64;
    let mut term = vec![m.zero(); dim];
    let mut meter = BatchMeter::new(progress, "mksol", 0, 0);
    for i in (s..top).rev() {
        w = session.apply(&w)?;
        horner += 1;
        meter.tick(horner, session.as_ref(), i == s);
        combine(&m, y, &coeff(i), &mut term);
        for (a, b) in w.iter_mut().zip(&term) {
            m.add_assign(a, b);
        }
    }
    if is_zero(&w) {
        return Err(SolverError::SolverFailure);
    }
    let mut tail = 0u64;
    loop {
        let next = session.apply(&w)?;
        tail += 1;
        if is_zero(&next) {
            return Ok(MksolRun {
                kernel: KernelVector { w, verified: true },
                horner_spmvs: horner,
                tail_spmvs: tail,
                valuation: s,
            });
        }
        if tail as usize >= s.max(1) {
            return Err(SolverError::SolverFailure);
        }
        w = next;
    }
}

/// Scalar Mksol with `F` from Berlekamp–Massey.
pub fn mksol_scalar(
    op: &dyn LinearOperator,
    y: &[Residue],
    f: &[Residue],
) -> Result<MksolRun, SolverError> {
    let gen = Generators {
        polys: vec![f.to_vec()],
        degree: f.len() - 1,
    };
    mksol_block(
        op,
        &BlockVector {
            columns: vec![y.to_vec()],
        },
        &gen,
    )
}
