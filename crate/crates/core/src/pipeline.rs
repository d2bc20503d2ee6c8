//! End-to-end kernel computation: elimination, squaring, balancing, the
//! grid solver, then lifting back to the original matrix.
//!
//! The reduced matrix is rarely square. Extra columns are met with zero
//! rows, which leaves the kernel unchanged. Extra rows are folded into the
//! square part: each is added, with random multipliers, to two random rows
//! among the first `ncols`. The fold can only enlarge the kernel, so every
//! candidate is checked against the unfolded and the original matrix, and
//! a failed check triggers a new pass with the next seed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::balance::{balance_permutation, identity_permutation, imbalance, split, GridSpec};
use crate::error::{Error, Result, SolverError};
use crate::gridmv::{GridConfig, GridOperator};
use crate::modring::Residue;
use crate::sge::{lift_kernel, lift_zero_column, sge_reduce, SgeOptions, SgeReport, SgeTranscript};
use crate::solver::{solve, verify_kernel, SolveOptions, SolverStats};
use crate::spmatrix::{MatrixBuilder, SparseMatrix};

/// Rows each surplus row is folded into.
const FOLD_TARGETS: usize = 2;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// `None` skips elimination.
    pub sge: Option<SgeOptions>,
    pub grid: GridSpec,
    /// Identity permutations when false.
    pub balance: bool,
    pub grid_config: GridConfig,
    pub solve: SolveOptions,
    /// Further passes, each with the seed incremented, when a candidate
    /// fails on the original matrix.
    pub verify_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sge: Some(SgeOptions::default()),
            grid: GridSpec { r: 1, c: 1 },
            balance: true,
            grid_config: GridConfig::default(),
            solve: SolveOptions::default(),
            verify_retries: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommSummary {
    pub iterations: usize,
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    /// Kernel vector of the original matrix, checked.
    #[serde(skip)]
    pub kernel: Vec<Residue>,
    pub original_shape: (usize, usize),
    pub reduced_shape: (usize, usize),
    /// Dimension iterated by the grid, padding included.
    pub padded_dim: usize,
    pub imbalance: Option<f64>,
    pub sge: Option<SgeReport>,
    pub solver: SolverStats,
    pub passes: u32,
    /// Set when the reduced system had no kernel and the vector instead
    /// comes from a column elimination found empty.
    pub empty_column: Option<usize>,
    pub timings: Vec<StageTiming>,
    pub comm: CommSummary,
}

/// Square matrix with the kernel of `a` (and, when rows are folded, maybe
/// more). Deterministic in `seed`.
pub fn square_up(a: &SparseMatrix, seed: u64) -> SparseMatrix {
    let (nr, nc) = (a.nrows(), a.ncols());
    let m = a.modulus();
    let mut b = MatrixBuilder::new(m, nc).with_c_max(a.c_max());
    if nr <= nc {
        for i in 0..nr {
            b.push_values(a.row_values(i))
                .expect("rows of a valid matrix");
        }
        for _ in nr..nc {
            b.push_values(Vec::new()).expect("empty row");
        }
        return b.build().expect("squared matrix is valid");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra: Vec<Vec<(usize, Residue)>> = vec![Vec::new(); nc];
    for k in nc..nr {
        let row = a.row_values(k);
        for _ in 0..FOLD_TARGETS {
            let target = rng.gen_range(0..nc);
            let mult = m.from_u64(rng.gen_range(1..=u32::MAX as u64));
            extra[target].extend(row.iter().map(|(c, v)| (*c, m.mul(&mult, v))));
        }
    }
    for (i, more) in extra.into_iter().enumerate() {
        let mut row = a.row_values(i);
        row.extend(more);
        b.push_values(row).expect("folded row is valid");
    }
    b.build().expect("squared matrix is valid")
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(Error::at(stage));
        self.0.push(StageTiming {
            stage,
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

/// A verified non-zero kernel vector of `a`.
pub fn run_pipeline(a: &SparseMatrix, config: &PipelineConfig) -> Result<PipelineReport> {
    let total = Instant::now();
    let mut timer = Timer(Vec::new());
    let (reduced, transcript, sge_report) = match &config.sge {
        Some(opts) => {
            let out = timer.time("sge", || Ok(sge_reduce(a, opts)))?;
            (out.matrix, Some(out.transcript), Some(out.report))
        }
        None => (a.clone(), None, None),
    };
    let fallback = |timer: Timer, last: Error| -> Result<PipelineReport> {
        let Some((t, col)) = transcript
            .as_ref()
            .and_then(|t| t.fixed_zero_cols.first().map(|&c| (t, c)))
        else {
            return Err(last);
        };
        empty_column_report(a, &reduced, t, col, sge_report.clone(), timer, total)
    };
    if reduced.ncols() == 0 {
        return fallback(timer, Error::at("sge")(Error::TrivialKernel));
    }

    let mut last = Error::Solver(SolverError::SolverFailure);
    for pass in 0..=config.verify_retries {
        let seed = config.solve.seed.wrapping_add(pass as u64);
        let square = timer.time("square", || Ok(square_up(&reduced, seed)))?;
        let (plan, imb) = timer.time("balance", || {
            let perm = if config.balance {
                balance_permutation(&square, config.grid)?
            } else {
                identity_permutation(&square, config.grid)
            };
            let bs = split(&square, &perm, config.grid)?;
            let imb = imbalance(&bs).ok();
            Ok((bs, imb))
        })?;
        let perm = plan.perm.clone();
        let padded_dim = plan.n_padded;
        let op = GridOperator::new(plan, config.grid_config.clone());
        let opts = SolveOptions {
            seed,
            ..config.solve.clone()
        };
        let report = match timer.time("solve", || Ok(solve(&op, &opts)?)) {
            Ok(r) => r,
            Err(e) => match e.root() {
                Error::Solver(SolverError::SolverFailure) => {
                    last = e;
                    continue;
                }
                _ => return Err(e),
            },
        };
        let mut x = perm.unpermute_cols(&report.kernel.w);
        x.truncate(reduced.ncols());
        let lifted = timer.time("lift", || {
            if !verify_kernel(&reduced, &x) {
                return Ok(None);
            }
            Ok(Some(match &transcript {
                Some(t) => lift_kernel(t, &x)?,
                None => x,
            }))
        })?;
        let Some(w) = lifted else {
            last = Error::at("lift")(Error::Solver(SolverError::SolverFailure));
            continue;
        };
        let ok = timer.time("verify", || Ok(verify_kernel(a, &w)))?;
        if !ok {
            last = Error::at("verify")(Error::Solver(SolverError::SolverFailure));
            continue;
        }
        timer.0.push(StageTiming {
            stage: "total",
            seconds: total.elapsed().as_secs_f64(),
        });
        let comm = CommSummary {
            iterations: report.stats.comm.len(),
            messages: report.stats.comm.total_messages(),
            bytes: report.stats.comm.total_bytes(),
        };
        return Ok(PipelineReport {
            kernel: w,
            original_shape: (a.nrows(), a.ncols()),
            reduced_shape: (reduced.nrows(), reduced.ncols()),
            padded_dim,
            imbalance: imb,
            sge: sge_report,
            solver: report.stats,
            passes: pass + 1,
            empty_column: None,
            timings: timer.0,
            comm,
        });
    }
    fallback(timer, last)
}

fn empty_column_report(
    a: &SparseMatrix,
    reduced: &SparseMatrix,
    t: &SgeTranscript,
    col: usize,
    sge: Option<SgeReport>,
    mut timer: Timer,
    total: Instant,
) -> Result<PipelineReport> {
    let w = timer.time("lift", || Ok(lift_zero_column(t, col)?))?;
    if !timer.time("verify", || Ok(verify_kernel(a, &w)))? {
        return Err(Error::at("verify")(Error::Solver(
            SolverError::SolverFailure,
        )));
    }
    timer.0.push(StageTiming {
        stage: "total",
        seconds: total.elapsed().as_secs_f64(),
    });
    Ok(PipelineReport {
        kernel: w,
        original_shape: (a.nrows(), a.ncols()),
        reduced_shape: (reduced.nrows(), reduced.ncols()),
        padded_dim: 0,
        imbalance: None,
        sge,
        solver: SolverStats::default(),
        passes: 0,
        empty_column: Some(col),
        timings: timer.0,
        comm: CommSummary {
            iterations: 0,
            messages: 0,
            bytes: 0,
        },
    })
}
