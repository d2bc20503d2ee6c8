mod common;

use sldlag::balance::GridSpec;
use sldlag::corpus::{generate, profile_ffs, profile_nfs};
use sldlag::error::{Error, SolverError};
use sldlag::pipeline::{run_pipeline, square_up, PipelineConfig};
use sldlag::solver::{BlockingParams, CheckpointConfig, SolveOptions};
use sldlag::spmatrix::{MatrixBuilder, SparseMatrix};

fn config(r: usize, c: usize, n: usize, m: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        grid: GridSpec::new(r, c).unwrap(),
        solve: SolveOptions {
            blocking: BlockingParams::new(n, m).unwrap(),
            seed,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn corpus_2000_200_bit_on_2x2() {
    let m = common::modulus_bits(200, 20);
    let a = generate(&profile_ffs().with_n(2000).with_gamma(20).with_seed(20), &m).unwrap();
    let r = run_pipeline(&a, &config(2, 2, 2, 4, 1)).unwrap();
    assert!(common::is_kernel(&a, &r.kernel));
    assert!(common::is_nonzero(&r.kernel));
    assert_eq!(r.original_shape, (2000, 2000));
    assert_eq!(r.padded_dim % 2, 0);
    assert!(r
        .timings
        .iter()
        .any(|t| t.stage == "total" && t.seconds > 0.0));
    assert!(r.comm.bytes > 0);
    assert!(r.imbalance.unwrap() >= 1.0);
}

#[test]
fn elimination_off_and_dense_columns() {
    let m = common::modulus_bits(90, 4);
    let a = generate(&profile_nfs().with_n(1600).with_seed(4), &m).unwrap();
    let mut cfg = config(2, 1, 1, 2, 3);
    cfg.sge = None;
    cfg.balance = false;
    let r = run_pipeline(&a, &cfg).unwrap();
    assert!(common::is_kernel(&a, &r.kernel));
    assert!(common::is_nonzero(&r.kernel));
    assert_eq!(r.reduced_shape, (1600, 1600));
}

#[test]
fn tall_input_is_folded_square() {
    let m = sldlag::modring::PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
    let a = common::sparse_corpus(&m, 300, 2);
    // 20 extra rows, each a combination of two existing ones
    let mut b = MatrixBuilder::new(&m, 300);
    for i in 0..300 {
        b.push_values(a.row_values(i)).unwrap();
    }
    for i in 0..20 {
        let mut row = a.row_values(i);
        row.extend(
            a.row_values(i + 100)
                .into_iter()
                .map(|(c, v)| (c, m.add(&v, &v))),
        );
        b.push_values(row).unwrap();
    }
    let tall = b.build().unwrap();
    let sq = square_up(&tall, 1);
    assert!(sq.is_square());
    assert_eq!(sq.nrows(), 300);
    let r = run_pipeline(&tall, &config(2, 2, 2, 4, 5)).unwrap();
    assert!(r.empty_column.is_none());
    assert!(common::is_kernel(&tall, &r.kernel));
    assert!(common::is_nonzero(&r.kernel));
}

#[test]
fn kernel_made_only_of_empty_columns() {
    // dropping rows leaves columns with no entries left after elimination;
    // the reduced system then has full column rank
    let m = sldlag::modring::PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
    let a = common::sparse_corpus(&m, 300, 2);
    let wide = a.select_rows(&(0..250).collect::<Vec<_>>());
    let r = run_pipeline(&wide, &config(1, 1, 2, 4, 5)).unwrap();
    let col = r.empty_column.expect("vector from an empty column");
    assert_eq!(r.kernel[col], m.one());
    assert!(common::is_kernel(&wide, &r.kernel));
}

#[test]
fn invertible_input_gives_trivial_kernel() {
    let m = common::modulus_bits(64, 1);
    let err =
        run_pipeline(&SparseMatrix::identity(&m, 30), &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err.root(), Error::TrivialKernel));
    let empty = SparseMatrix::zero(&m, 0, 0);
    let err = run_pipeline(&empty, &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err.root(), Error::TrivialKernel));
}

#[test]
fn same_seed_same_kernel_and_resume_matches() {
    let m = common::modulus_bits(128, 7);
    let a = common::sparse_corpus(&m, 800, 7);
    let base = config(2, 2, 2, 4, 11);
    let w1 = run_pipeline(&a, &base).unwrap().kernel;
    let w2 = run_pipeline(&a, &base).unwrap().kernel;
    assert_eq!(w1, w2);

    let dir = tempfile::tempdir().unwrap();
    let mut halted = base.clone();
    halted.solve.checkpoint = Some(CheckpointConfig {
        interval: 40,
        halt_after: Some(100),
        ..CheckpointConfig::new(dir.path())
    });
    let err = run_pipeline(&a, &halted).unwrap_err();
    assert!(
        matches!(err.root(), Error::Solver(SolverError::Interrupted(100))),
        "{err}"
    );
    let mut resume = base.clone();
    resume.solve.checkpoint = Some(CheckpointConfig {
        interval: 40,
        ..CheckpointConfig::new(dir.path())
    });
    let r = run_pipeline(&a, &resume).unwrap();
    assert_eq!(r.kernel, w1);
    assert!(r.solver.resumed_from.iter().any(|&t| t > 0));
}
