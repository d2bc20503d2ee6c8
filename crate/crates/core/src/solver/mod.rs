//! Scalar and block Wiedemann.
//!
//! Three phases: Krylov (`ᵀX·Aⁱ·Y`, one independent chain per column of
//! `Y`), Lingen (a linear generator of that sequence) and Mksol (evaluate
//! the generator at `A` on `Y`). Operators are abstract so the same code
//! runs on a local matrix or on a [`crate::gridmv`] grid.

pub mod bm;
pub mod checkpoint;
pub mod krylov;
pub mod lingen;
pub mod mksol;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::SolverError;
use crate::gridmv::{CommLog, GridEngine, GridOperator};
use crate::modring::{PrimeModulus, Residue};
use crate::spmatrix::{spmv_sequential, SparseMatrix, SpmvKernel};

pub use bm::{berlekamp_massey, MinimalPolynomial};
pub use checkpoint::{CheckpointConfig, CheckpointMeta};
pub use krylov::{krylov_block, krylov_scalar, BlockKrylov, ColumnRun, Projection};
pub use lingen::{block_lingen, lingen_candidates, vanishing_combinations, Generators};
pub use mksol::{mksol_block, mksol_scalar, MksolRun};

/// Extra sequence terms beyond `⌈N/n⌉ + ⌈N/m⌉`.
pub const DEFAULT_MARGIN: usize = 32;
pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BlockingParams {
    pub n: usize,
    pub m: usize,
}

impl BlockingParams {
    pub fn new(n: usize, m: usize) -> Result<Self, String> {
        if n == 0 || m < n {
            return Err(format!("blocking ({n},{m}) needs n >= 1 and m >= n"));
        }
        Ok(BlockingParams { n, m })
    }

    /// `m = 2n`.
    pub fn with_n(n: usize) -> Result<Self, String> {
        Self::new(n, 2 * n)
    }

    /// `⌈N/n⌉ + ⌈N/m⌉ + margin`.
    pub fn sequence_length(&self, dim: usize, margin: usize) -> usize {
        dim.div_ceil(self.n) + dim.div_ceil(self.m) + margin
    }
}

impl std::str::FromStr for BlockingParams {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (n, m) = s
            .split_once(',')
            .ok_or_else(|| format!("expected n,m, got {s:?}"))?;
        let n = n.trim().parse().map_err(|_| format!("bad n in {s:?}"))?;
        let m = m.trim().parse().map_err(|_| format!("bad m in {s:?}"))?;
        Self::new(n, m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockVector {
    pub columns: Vec<Vec<Residue>>,
}

impl BlockVector {
    pub fn random<R: rand::Rng>(m: &PrimeModulus, width: usize, dim: usize, rng: &mut R) -> Self {
        BlockVector {
            columns: (0..width)
                .map(|_| (0..dim).map(|_| m.random_residue(rng)).collect())
                .collect(),
        }
    }

    /// The first `width` unit vectors.
    pub fn unit(m: &PrimeModulus, width: usize, dim: usize) -> Self {
        BlockVector {
            columns: (0..width)
                .map(|k| {
                    (0..dim)
                        .map(|i| if i == k { m.one() } else { m.zero() })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// `terms[k][r·n + j]` is entry `(r, j)` of `a_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSequence {
    pub m: usize,
    pub n: usize,
    pub terms: Vec<Vec<Residue>>,
}

impl BlockSequence {
    pub fn get(&self, k: usize, r: usize, j: usize) -> &Residue {
        &self.terms[k][r * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The subsequence of column `j` as scalars when `m = 1`.
    pub fn column(&self, r: usize, j: usize) -> Vec<Residue> {
        (0..self.len()).map(|k| self.get(k, r, j).clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelVector {
    pub w: Vec<Residue>,
    pub verified: bool,
}

/// True iff `a·w = 0` and `w ≠ 0`.
pub fn verify_kernel(a: &SparseMatrix, w: &[Residue]) -> bool {
    if w.len() != a.ncols() || w.iter().all(|x| x.is_zero()) {
        return false;
    }
    match spmv_sequential(a, w) {
        Ok(v) => v.iter().all(|x| x.is_zero()),
        Err(_) => false,
    }
}

/// A square operator the solvers iterate.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn modulus(&self) -> &PrimeModulus;
    /// A stateful handle for a chain of products.
    fn session(&self) -> Result<Box<dyn OperatorSession + '_>, SolverError>;
}

pub trait OperatorSession {
    fn apply(&mut self, u: &[Residue]) -> Result<Vec<Residue>, SolverError>;
    /// Communication so far; empty for local operators.
    fn comm_log(&self) -> CommLog {
        CommLog::default()
    }
    fn comm_bytes(&self) -> u64 {
        0
    }
}

/// One batch of products in a column task.
#[derive(Clone, Debug, Serialize)]
pub struct Progress {
    pub phase: &'static str,
    pub column: usize,
    /// Iteration reached at the end of the batch.
    pub iteration: u64,
    pub batch_iterations: u64,
    pub spmv_ms: f64,
    pub comm_bytes: u64,
}

/// Receiver of [`Progress`] records, called from worker threads.
#[derive(Clone)]
pub struct ProgressSink {
    pub batch: u64,
    pub sink: std::sync::Arc<dyn Fn(&Progress) + Send + Sync>,
}

impl std::fmt::Debug for ProgressSink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ProgressSink(batch={})", self.batch)
    }
}

/// Emits a record every `batch` products.
pub(crate) struct BatchMeter<'a> {
    sink: Option<&'a ProgressSink>,
    phase: &'static str,
    column: usize,
    started: Instant,
    first: u64,
    bytes: u64,
}

impl<'a> BatchMeter<'a> {
    pub(crate) fn new(
        sink: Option<&'a ProgressSink>,
        phase: &'static str,
        column: usize,
        first: u64,
    ) -> Self {
        BatchMeter {
            sink,
            phase,
            column,
            started: Instant::now(),
            first,
            bytes: 0,
        }
    }

    pub(crate) fn tick(&mut self, iteration: u64, session: &dyn OperatorSession, last: bool) {
        let Some(s) = self.sink else {
            return;
        };
        let done = iteration - self.first;
        if done == 0 || (!done.is_multiple_of(s.batch.max(1)) && !last) {
            return;
        }
        let bytes = session.comm_bytes();
        (s.sink)(&Progress {
            phase: self.phase,
            column: self.column,
            iteration,
            batch_iterations: done,
            spmv_ms: self.started.elapsed().as_secs_f64() * 1e3,
            comm_bytes: bytes - self.bytes,
        });
        self.started = Instant::now();
        self.first = iteration;
        self.bytes = bytes;
    }
}

/// A square matrix multiplied locally.
#[derive(Clone, Debug)]
pub struct MatrixOperator {
    kernel: SpmvKernel,
}

impl MatrixOperator {
    pub fn new(a: &SparseMatrix) -> Result<Self, SolverError> {
        if !a.is_square() {
            return Err(SolverError::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        Ok(MatrixOperator {
            kernel: SpmvKernel::from_matrix(a),
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        self.kernel.matrix()
    }
}

struct MatrixSession<'a>(&'a SpmvKernel);

impl OperatorSession for MatrixSession<'_> {
    fn apply(&mut self, u: &[Residue]) -> Result<Vec<Residue>, SolverError> {
        Ok(self.0.apply(u)?)
    }
}

impl LinearOperator for MatrixOperator {
    fn dim(&self) -> usize {
        self.kernel.matrix().nrows()
    }

    fn modulus(&self) -> &PrimeModulus {
        self.kernel.matrix().modulus()
    }

    fn session(&self) -> Result<Box<dyn OperatorSession + '_>, SolverError> {
        Ok(Box::new(MatrixSession(&self.kernel)))
    }
}

struct GridSession {
    engine: GridEngine,
    /// The engine already holds this vector; skip reloading it.
    loaded: Option<Vec<Residue>>,
}

impl OperatorSession for GridSession {
    fn apply(&mut self, u: &[Residue]) -> Result<Vec<Residue>, SolverError> {
        if self.loaded.as_deref() != Some(u) {
            self.engine.load(u)?;
        }
        let v = self.engine.iterate()?;
        self.loaded = Some(v.clone());
        Ok(v)
    }

    fn comm_log(&self) -> CommLog {
        self.engine.comm_log().clone()
    }

    fn comm_bytes(&self) -> u64 {
        self.engine.comm_log().total_bytes()
    }
}

/// Iterates the permuted, padded matrix held by the grid.
impl LinearOperator for GridOperator {
    fn dim(&self) -> usize {
        self.plan().dim()
    }

    fn modulus(&self) -> &PrimeModulus {
        self.plan().modulus()
    }

    fn session(&self) -> Result<Box<dyn OperatorSession + '_>, SolverError> {
        Ok(Box::new(GridSession {
            engine: self.engine()?,
            loaded: None,
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Scalar Krylov, Berlekamp–Massey, scalar Mksol (`n = m = 1`).
    Wiedemann,
    Block,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wiedemann" => Ok(Algorithm::Wiedemann),
            "block" => Ok(Algorithm::Block),
            _ => Err(format!(
                "unknown algorithm {s:?} (expected wiedemann or block)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub algorithm: Algorithm,
    pub blocking: BlockingParams,
    pub margin: usize,
    pub retries: u32,
    pub seed: u64,
    /// Use the first `m` unit vectors for `X` instead of random ones.
    pub unit_x: bool,
    pub checkpoint: Option<CheckpointConfig>,
    pub progress: Option<ProgressSink>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            algorithm: Algorithm::Block,
            blocking: BlockingParams { n: 1, m: 2 },
            margin: DEFAULT_MARGIN,
            retries: DEFAULT_RETRIES,
            seed: 0,
            unit_x: false,
            checkpoint: None,
            progress: None,
        }
    }
}

/// Counters and timings of the successful attempt.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SolverStats {
    pub attempts: u32,
    pub sequence_terms: usize,
    pub krylov_spmvs: Vec<u64>,
    pub resumed_from: Vec<u64>,
    pub generator_degree: usize,
    pub generator_valuation: usize,
    pub candidates_tried: usize,
    pub mksol_horner_spmvs: u64,
    pub mksol_tail_spmvs: u64,
    pub krylov_seconds: f64,
    pub lingen_seconds: f64,
    pub mksol_seconds: f64,
    pub comm: CommLog,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub kernel: KernelVector,
    pub stats: SolverStats,
}

/// Random blocks for one attempt; each attempt draws from its own stream.
pub fn attempt_blocks(
    m: &PrimeModulus,
    dim: usize,
    opts: &SolveOptions,
    attempt: u32,
) -> (BlockVector, BlockVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(attempt as u64);
    let (n, mm) = match opts.algorithm {
        Algorithm::Wiedemann => (1, 1),
        Algorithm::Block => (opts.blocking.n, opts.blocking.m),
    };
    let y = BlockVector::random(m, n, dim, &mut rng);
    let x = if opts.unit_x {
        BlockVector::unit(m, mm, dim)
    } else {
        BlockVector::random(m, mm, dim, &mut rng)
    };
    (x, y)
}

/// Finds a verified non-zero kernel vector of `op`, retrying with fresh
/// random blocks (and a doubled margin after a generator failure).
pub fn solve(op: &dyn LinearOperator, opts: &SolveOptions) -> Result<SolveReport, SolverError> {
    let dim = op.dim();
    if dim == 0 {
        return Err(SolverError::SolverFailure);
    }
    if opts.unit_x && opts.blocking.m > dim {
        return Err(SolverError::DimensionMismatch {
            expected: dim,
            got: opts.blocking.m,
        });
    }
    let mut margin = opts.margin;
    let mut last = SolverError::SolverFailure;
    for attempt in 0..=opts.retries {
        match solve_attempt(op, opts, attempt, margin) {
            Ok(mut report) => {
                report.stats.attempts = attempt + 1;
                return Ok(report);
            }
            Err(SolverError::GeneratorFailure) => {
                margin *= 2;
                last = SolverError::GeneratorFailure;
            }
            Err(SolverError::SolverFailure) => last = SolverError::SolverFailure,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

fn solve_attempt(
    op: &dyn LinearOperator,
    opts: &SolveOptions,
    attempt: u32,
    margin: usize,
) -> Result<SolveReport, SolverError> {
    let m = op.modulus().clone();
    let dim = op.dim();
    let (x, y) = attempt_blocks(&m, dim, opts, attempt);
    let bp = match opts.algorithm {
        Algorithm::Wiedemann => BlockingParams { n: 1, m: 1 },
        Algorithm::Block => opts.blocking,
    };
    let count = bp.sequence_length(dim, margin);
    let proj = if opts.unit_x {
        Projection::Unit(bp.m)
    } else {
        Projection::dense(&m, &x)
    };
    let ckpt = match &opts.checkpoint {
        Some(cfg) => {
            let meta = CheckpointMeta {
                dim,
                n: bp.n,
                m: bp.m,
                count,
                seed: opts.seed,
                attempt,
                unit_x: opts.unit_x,
                modulus: m.ell().to_string(),
            };
            Some(checkpoint::Checkpointer::open(cfg, &meta, &m)?)
        }
        None => None,
    };
    let mut stats = SolverStats {
        sequence_terms: count,
        ..Default::default()
    };

    let t0 = Instant::now();
    let kry =
        krylov::krylov_block_with(op, &proj, &y, count, ckpt.as_ref(), opts.progress.as_ref())?;
    stats.krylov_seconds = t0.elapsed().as_secs_f64();
    stats.krylov_spmvs = kry.columns.iter().map(|c| c.spmvs).collect();
    stats.resumed_from = kry.columns.iter().map(|c| c.resumed_from).collect();
    for c in &kry.columns {
        stats.comm.extend(&c.comm);
    }

    let t1 = Instant::now();
    let candidates = match opts.algorithm {
        Algorithm::Wiedemann => {
            let f = berlekamp_massey(&m, &kry.sequence.column(0, 0));
            vec![Generators {
                degree: f.degree(),
                polys: vec![f.coeffs],
            }]
        }
        Algorithm::Block => {
            let gens = lingen_candidates(&m, &kry.sequence, dim)?;
            let mut c: Vec<Generators> =
                gens.iter().filter(|g| g.valuation() > 0).cloned().collect();
            c.extend(vanishing_combinations(&m, &gens));
            if c.is_empty() {
                return Err(SolverError::SolverFailure);
            }
            c
        }
    };
    stats.lingen_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    for gen in &candidates {
        stats.candidates_tried += 1;
        match mksol::mksol_block_with(op, &y, gen, opts.progress.as_ref()) {
            Ok(run) => {
                stats.mksol_seconds = t2.elapsed().as_secs_f64();
                stats.generator_degree = gen.effective_degree();
                stats.generator_valuation = run.valuation;
                stats.mksol_horner_spmvs = run.horner_spmvs;
                stats.mksol_tail_spmvs = run.tail_spmvs;
                return Ok(SolveReport {
                    kernel: run.kernel,
                    stats,
                });
            }
            Err(SolverError::SolverFailure) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SolverError::SolverFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmatrix::MatrixBuilder;
    use rand::Rng;

    fn singular(m: &PrimeModulus, n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = MatrixBuilder::new(m, n);
        for _ in 0..n {
            let row: Vec<(usize, i64)> = (0..5)
                .map(|_| (rng.gen_range(0..n - 1), rng.gen_range(-9i64..=9)))
                .collect();
            b.push_small(&row).unwrap();
        }
        // Last column empty: e_{n-1} is in the kernel, along with whatever
        // else the random rows leave.
        b.build().unwrap()
    }

    #[test]
    fn block_solver_finds_kernel() {
        let m = PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
        for (n, mm) in [(1, 1), (2, 4), (3, 6)] {
            let a = singular(&m, 60, n as u64);
            let op = MatrixOperator::new(&a).unwrap();
            let opts = SolveOptions {
                blocking: BlockingParams::new(n, mm).unwrap(),
                seed: 7,
                ..Default::default()
            };
            let rep = solve(&op, &opts).unwrap();
            assert!(verify_kernel(&a, &rep.kernel.w), "({n},{mm})");
            assert_eq!(
                rep.stats.krylov_spmvs,
                vec![rep.stats.sequence_terms as u64; n]
            );
        }
    }

    #[test]
    fn scalar_solver_finds_kernel() {
        let m = PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
        let a = singular(&m, 40, 3);
        let op = MatrixOperator::new(&a).unwrap();
        let opts = SolveOptions {
            algorithm: Algorithm::Wiedemann,
            seed: 1,
            ..Default::default()
        };
        let rep = solve(&op, &opts).unwrap();
        assert!(verify_kernel(&a, &rep.kernel.w));
    }

    #[test]
    fn identity_has_trivial_kernel() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let a = SparseMatrix::identity(&m, 10);
        let op = MatrixOperator::new(&a).unwrap();
        for algorithm in [Algorithm::Wiedemann, Algorithm::Block] {
            let opts = SolveOptions {
                algorithm,
                ..Default::default()
            };
            assert!(matches!(solve(&op, &opts), Err(SolverError::SolverFailure)));
        }
    }

    #[test]
    fn verify_rejects_zero() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let a = SparseMatrix::zero(&m, 3, 3);
        assert!(!verify_kernel(&a, &[m.zero(), m.zero(), m.zero()]));
        assert!(verify_kernel(&a, &[m.one(), m.zero(), m.zero()]));
    }
}
