use std::sync::Arc;

use super::{Code, SparseMatrix};
use crate::error::MatrixError;
use crate::modring::{Residue, RnsAccumulator, RnsContext};

/// Row count above which a product is split across execution contexts.
const PARALLEL_ROWS: usize = 16_384;

/// Prepared product `v = A·u` for one matrix.
///
/// Holds the RNS context sized for the matrix's heaviest row and largest
/// small coefficient, plus Montgomery forms of every full-class value.
#[derive(Clone, Debug)]
pub struct SpmvKernel {
    matrix: Arc<SparseMatrix>,
    ctx: RnsContext,
    full_mont: Vec<Residue>,
    dense_mont: Vec<Vec<Residue>>,
}

impl SpmvKernel {
    pub fn new(matrix: Arc<SparseMatrix>) -> Self {
        let m = matrix.modulus().clone();
        let ctx = RnsContext::new(&m, matrix.max_row_weight(), matrix.max_small_magnitude());
        let full_mont = matrix.full_values().iter().map(|v| m.to_mont(v)).collect();
        let dense_mont = matrix
            .dense_columns()
            .iter()
            .map(|d| d.values.iter().map(|v| m.to_mont(v)).collect())
            .collect();
        SpmvKernel {
            matrix,
            ctx,
            full_mont,
            dense_mont,
        }
    }

    pub fn from_matrix(matrix: &SparseMatrix) -> Self {
        Self::new(Arc::new(matrix.clone()))
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn shared_matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }

    pub fn rns(&self) -> &RnsContext {
        &self.ctx
    }

    pub fn apply(&self, u: &[Residue]) -> Result<Vec<Residue>, MatrixError> {
        let mut out = vec![self.matrix.modulus().zero(); self.matrix.nrows()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &[Residue], out: &mut [Residue]) -> Result<(), MatrixError> {
        let a = &*self.matrix;
        if u.len() != a.ncols() {
            return Err(MatrixError::DimensionMismatch {
                expected: a.ncols(),
                got: u.len(),
            });
        }
        if out.len() != a.nrows() {
            return Err(MatrixError::DimensionMismatch {
                expected: a.nrows(),
                got: out.len(),
            });
        }
        let k = self.ctx.len();
        let sparse = a.sparse_ncols();
        let mut urns = vec![0u64; sparse * k];
        for (j, x) in u[..sparse].iter().enumerate() {
            self.ctx.to_rns_into(x, &mut urns[j * k..(j + 1) * k]);
        }
        let contexts = crate::contexts();
        if a.nrows() < PARALLEL_ROWS || contexts <= 1 {
            self.rows_into(0, u, &urns, out);
        } else {
            let chunk = a.nrows().div_ceil(contexts);
            std::thread::scope(|s| {
                for (t, part) in out.chunks_mut(chunk).enumerate() {
                    let urns = &urns;
                    s.spawn(move || self.rows_into(t * chunk, u, urns, part));
                }
            });
        }
        Ok(())
    }

    fn rows_into(&self, first: usize, u: &[Residue], urns: &[u64], out: &mut [Residue]) {
        if self.ctx.lazy_sums() {
            match self.ctx.len() {
                1 => return self.rows_fixed::<1>(first, u, urns, out),
                2 => return self.rows_fixed::<2>(first, u, urns, out),
                3 => return self.rows_fixed::<3>(first, u, urns, out),
                4 => return self.rows_fixed::<4>(first, u, urns, out),
                5 => return self.rows_fixed::<5>(first, u, urns, out),
                6 => return self.rows_fixed::<6>(first, u, urns, out),
                7 => return self.rows_fixed::<7>(first, u, urns, out),
                8 => return self.rows_fixed::<8>(first, u, urns, out),
                _ => {}
            }
        }
        self.rows_generic(first, u, urns, out)
    }

    /// Same as [`Self::rows_generic`] with `K` moduli and unreduced sums.
    fn rows_fixed<const K: usize>(
        &self,
        first: usize,
        u: &[Residue],
        urns: &[u64],
        out: &mut [Residue],
    ) {
        let a = &*self.matrix;
        let m = a.modulus();
        let moduli: [u64; K] = self.ctx.moduli().try_into().expect("K moduli");
        let (xs, _) = urns.as_chunks::<K>();
        for (off, slot) in out.iter_mut().enumerate() {
            let i = first + off;
            let mut pos = [0u128; K];
            let mut neg = [0u128; K];
            let mut full_acc: Option<Residue> = None;
            let view = a.row_view(i);
            for (&c, &code) in view.cols.iter().zip(view.codes) {
                let x = &xs[c as usize];
                match code {
                    Code::PlusOne => {
                        for t in 0..K {
                            pos[t] += x[t] as u128;
                        }
                    }
                    Code::MinusOne => {
                        for t in 0..K {
                            neg[t] += x[t] as u128;
                        }
                    }
                    Code::Small(v) => {
                        let mag = v.unsigned_abs() as u128;
                        let side = if v > 0 { &mut pos } else { &mut neg };
                        for t in 0..K {
                            side[t] += mag * x[t] as u128;
                        }
                    }
                    Code::Full(idx) => {
                        let p = m.mul_mont_plain(&self.full_mont[idx as usize], &u[c as usize]);
                        match &mut full_acc {
                            Some(f) => m.add_assign(f, &p),
                            None => full_acc = Some(p),
                        }
                    }
                }
            }
            let mut r = [0u64; K];
            for t in 0..K {
                let q = moduli[t] as u128;
                r[t] = ((pos[t] % q + q - neg[t] % q) % q) as u64;
            }
            let mut v = self.ctx.from_rns_limbs(&r);
            if let Some(f) = &full_acc {
                m.add_assign(&mut v, f);
            }
            for (d, dm) in a.dense_columns().iter().zip(&self.dense_mont) {
                if !dm[i].is_zero() {
                    let p = m.mul_mont_plain(&dm[i], &u[d.col]);
                    m.add_assign(&mut v, &p);
                }
            }
            *slot = v;
        }
    }

    fn rows_generic(&self, first: usize, u: &[Residue], urns: &[u64], out: &mut [Residue]) {
        let a = &*self.matrix;
        let m = a.modulus();
        let k = self.ctx.len();
        let mut acc = RnsAccumulator::new(&self.ctx);
        for (off, slot) in out.iter_mut().enumerate() {
            let i = first + off;
            acc.reset();
            let mut full_acc = m.zero();
            let view = a.row_view(i);
            for (&c, &code) in view.cols.iter().zip(view.codes) {
                let c = c as usize;
                let x = &urns[c * k..(c + 1) * k];
                match code {
                    Code::PlusOne => acc.add(x),
                    Code::MinusOne => acc.sub(x),
                    Code::Small(v) => acc.mul_small(v as i64, x),
                    Code::Full(idx) => {
                        let p = m.mul_mont_plain(&self.full_mont[idx as usize], &u[c]);
                        m.add_assign(&mut full_acc, &p);
                    }
                }
            }
            for (d, dm) in a.dense_columns().iter().zip(&self.dense_mont) {
                if !dm[i].is_zero() {
                    let p = m.mul_mont_plain(&dm[i], &u[d.col]);
                    m.add_assign(&mut full_acc, &p);
                }
            }
            *slot = m.add(&acc.finish(), &full_acc);
        }
    }
}

/// Reference product `A·u` (dense-column contributions included).
pub fn spmv_sequential(a: &SparseMatrix, u: &[Residue]) -> Result<Vec<Residue>, MatrixError> {
    SpmvKernel::from_matrix(a).apply(u)
}
