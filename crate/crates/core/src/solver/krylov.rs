//! Krylov sequences `ᵀx·Aⁱ·y`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::checkpoint::Checkpointer;
use super::{BatchMeter, BlockSequence, BlockVector, LinearOperator, ProgressSink};
use crate::error::SolverError;
use crate::gridmv::CommLog;
use crate::modring::{PrimeModulus, Residue};

/// Scalar sequence `a_i = ᵀx·Aⁱ·y` for `i < count`.
pub fn krylov_scalar(
    op: &dyn LinearOperator,
    x: &[Residue],
    y: &[Residue],
    count: usize,
) -> Result<Vec<Residue>, SolverError> {
    let dim = op.dim();
    for v in [x, y] {
        if v.len() != dim {
            return Err(SolverError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let m = op.modulus().clone();
    let dot = |v: &[Residue]| {
        let mut acc = m.zero();
        for (a, b) in x.iter().zip(v) {
            m.add_assign(&mut acc, &m.mul(a, b));
        }
        acc
    };
    let mut out = Vec::with_capacity(count);
    let mut session = op.session()?;
    let mut v = y.to_vec();
    for i in 0..count {
        out.push(dot(&v));
        if i + 1 < count {
            v = session.apply(&v)?;
        }
    }
    Ok(out)
}

/// The fixed left block `X`, applied to every iterate.
#[derive(Clone, Debug)]
pub enum Projection {
    /// Random dense columns, kept in Montgomery form.
    Dense(Vec<Vec<Residue>>),
    /// The first `m` unit vectors: a term is just the leading coordinates.
    Unit(usize),
}

impl Projection {
    pub fn dense(m: &PrimeModulus, x: &BlockVector) -> Self {
        Projection::Dense(
            x.columns
                .iter()
                .map(|c| c.iter().map(|v| m.to_mont(v)).collect())
                .collect(),
        )
    }

    pub fn width(&self) -> usize {
        match self {
            Projection::Dense(c) => c.len(),
            Projection::Unit(m) => *m,
        }
    }

    /// `ᵀX·v` as an `m`-vector.
    pub fn apply(&self, m: &PrimeModulus, v: &[Residue]) -> Vec<Residue> {
        match self {
            Projection::Dense(cols) => cols.iter().map(|x| m.dot_mont_plain(x, v)).collect(),
            Projection::Unit(k) => v[..*k].to_vec(),
        }
    }
}

/// Output of one column task.
#[derive(Clone, Debug)]
pub struct ColumnRun {
    /// `count` projected terms, each an `m`-vector.
    pub terms: Vec<Vec<Residue>>,
    /// SpMV applications the sequence represents (`count`).
    pub spmvs: u64,
    /// Iteration the task resumed from (0 for a fresh start).
    pub resumed_from: u64,
    pub comm: CommLog,
}

/// One column task: `count` products starting from `y`, projecting every
/// iterate. The iterate after the last product is what a later extension
/// would continue from, so it is produced (and checkpointed) too.
pub(crate) fn krylov_column(
    op: &dyn LinearOperator,
    proj: &Projection,
    y: &[Residue],
    count: usize,
    col: usize,
    ckpt: Option<&Checkpointer>,
    progress: Option<&ProgressSink>,
) -> Result<ColumnRun, SolverError> {
    let m = op.modulus().clone();
    let dim = op.dim();
    let (mut terms, mut v) = match ckpt.map(|c| c.load(col, dim)).transpose()?.flatten() {
        Some((terms, v)) => {
            if terms.len() > count + 1 || proj.apply(&m, &v) != *terms.last().expect("non-empty") {
                return Err(SolverError::CheckpointMismatch(format!(
                    "column {col}: iterate does not match the saved sequence"
                )));
            }
            (terms, v)
        }
        None => (vec![proj.apply(&m, y)], y.to_vec()),
    };
    let start = terms.len() as u64 - 1;
    let mut session = op.session()?;
    let mut meter = BatchMeter::new(progress, "krylov", col, start);
    for t in start + 1..=count as u64 {
        v = session.apply(&v)?;
        terms.push(proj.apply(&m, &v));
        meter.tick(t, session.as_ref(), t == count as u64);
        if let Some(c) = ckpt {
            if t % c.config.interval == 0 {
                c.save(col, &terms, &v)?;
            }
            if c.config.halt_after == Some(t) {
                return Err(SolverError::Interrupted(t as usize));
            }
        }
    }
    terms.truncate(count);
    Ok(ColumnRun {
        terms,
        spmvs: count as u64,
        resumed_from: start,
        comm: session.comm_log(),
    })
}

/// Runs `f(0..count)` on up to [`crate::contexts`] threads; results in index
/// order, first error by index.
pub(crate) fn run_tasks<T, F>(count: usize, f: F) -> Result<Vec<T>, SolverError>
where
    T: Send,
    F: Fn(usize) -> Result<T, SolverError> + Sync,
{
    let workers = crate::contexts().min(count);
    if workers <= 1 {
        return (0..count).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, SolverError>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= count {
                    return;
                }
                let r = f(k);
                slots.lock().expect("task slots")[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("task slots")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

pub struct BlockKrylov {
    pub sequence: BlockSequence,
    pub columns: Vec<ColumnRun>,
}

pub(crate) fn krylov_block_with(
    op: &dyn LinearOperator,
    proj: &Projection,
    y: &BlockVector,
    count: usize,
    ckpt: Option<&Checkpointer>,
    progress: Option<&ProgressSink>,
) -> Result<BlockKrylov, SolverError> {
    let dim = op.dim();
    if let Some(c) = y.columns.iter().find(|c| c.len() != dim) {
        return Err(SolverError::DimensionMismatch {
            expected: dim,
            got: c.len(),
        });
    }
    if let Projection::Dense(cols) = proj {
        if let Some(c) = cols.iter().find(|c| c.len() != dim) {
            return Err(SolverError::DimensionMismatch {
                expected: dim,
                got: c.len(),
            });
        }
    }
    let n = y.columns.len();
    let m = proj.width();
    let columns = run_tasks(n, |j| {
        krylov_column(op, proj, &y.columns[j], count, j, ckpt, progress)
    })?;
    let terms = (0..count)
        .map(|k| {
            let mut t = Vec::with_capacity(m * n);
            for r in 0..m {
                for c in &columns {
                    t.push(c.terms[k][r].clone());
                }
            }
            t
        })
        .collect();
    Ok(BlockKrylov {
        sequence: BlockSequence { m, n, terms },
        columns,
    })
}

/// Block sequence `ᵀX·Aⁱ·Y` for `i < count`, one independent task per
/// column of `Y`.
pub fn krylov_block(
    op: &dyn LinearOperator,
    x: &BlockVector,
    y: &BlockVector,
    count: usize,
) -> Result<BlockKrylov, SolverError> {
    let proj = Projection::dense(op.modulus(), x);
    krylov_block_with(op, &proj, y, count, None, None)
}
