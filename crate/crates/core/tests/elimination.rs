mod common;

use num_bigint::BigUint;
use proptest::prelude::*;
use sldlag::modring::{PrimeModulus, Residue};
use sldlag::sge::{
    lift_kernel, lift_zero_column, projected_cost, read_transcript, sge_reduce, write_transcript,
    SgeOptions, SgeStep, StopReason,
};
use sldlag::spmatrix::{MatrixBuilder, SparseMatrix};

fn to_residues(m: &PrimeModulus, v: &[BigUint]) -> Vec<Residue> {
    v.iter()
        .map(|x| m.try_residue(x).expect("canonical"))
        .collect()
}

fn nullity(a: &SparseMatrix) -> usize {
    a.ncols() - common::rank(a.modulus().ell(), &common::dense_big(a))
}

/// Reduces `a`, finds a kernel vector of the reduced system by dense
/// elimination and checks that its lift is a kernel vector of `a`.
/// Returns false when the reduced kernel is trivial.
fn check_lift(a: &SparseMatrix) -> bool {
    let m = a.modulus();
    let out = sge_reduce(a, &SgeOptions::default());
    assert_eq!(out.transcript.replay(a).unwrap(), out.matrix);
    let r = &out.matrix;
    assert_eq!(out.transcript.reduced_nrows(), r.nrows());
    assert_eq!(out.transcript.reduced_ncols(), r.ncols());
    // pinning a zero column to 0 is the only way kernel dimension is lost
    assert_eq!(
        nullity(a),
        nullity(r) + out.transcript.fixed_zero_cols.len()
    );
    for &c in &out.transcript.fixed_zero_cols {
        let u = lift_zero_column(&out.transcript, c).unwrap();
        assert_eq!(u[c], m.one());
        assert!(common::is_kernel(a, &u));
    }
    let Some(w) = common::dense_kernel_vector(m.ell(), &common::dense_big(r), r.ncols()) else {
        return false;
    };
    let w = to_residues(m, &w);
    let lifted = lift_kernel(&out.transcript, &w).unwrap();
    assert_eq!(lifted.len(), a.ncols());
    assert!(common::is_kernel(a, &lifted));
    assert!(common::is_nonzero(&lifted));
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lift_and_cost_on_small_corpora(seed in any::<u64>(), n in 60usize..=120) {
        let m = PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
        let a = common::sparse_corpus(&m, n, seed);
        let out = sge_reduce(&a, &SgeOptions::default());
        let h = &out.report.cost_history;
        prop_assert_eq!(h[0], projected_cost(&a));
        prop_assert!(h.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*h.last().unwrap(), projected_cost(&out.matrix));
        check_lift(&a);
    }

    #[test]
    fn transcript_round_trip(seed in any::<u64>()) {
        let m = common::modulus_bits(90, 3);
        let a = common::sparse_corpus(&m, 80, seed);
        let t = sge_reduce(&a, &SgeOptions::default()).transcript;
        let mut bytes = Vec::new();
        write_transcript(&mut bytes, &t).unwrap();
        let back = read_transcript(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &t);
        let mut again = Vec::new();
        write_transcript(&mut again, &back).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn lift_is_sound_on_corpus_500() {
    let m = common::modulus_bits(64, 1);
    let mut found = 0;
    for seed in 0..3 {
        let a = common::sparse_corpus(&m, 500, seed);
        let out = sge_reduce(&a, &SgeOptions::default());
        assert!(projected_cost(&out.matrix) < projected_cost(&a));
        if check_lift(&a) {
            found += 1;
        }
    }
    assert_eq!(found, 3);
}

#[test]
fn zero_column_is_dropped_and_lifted_as_zero() {
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    // column 2 is empty; the remaining 3×3 block is singular
    let mut b = MatrixBuilder::new(&m, 4);
    b.push_small(&[(0, 1), (1, 1), (3, 1)]).unwrap();
    b.push_small(&[(0, 1), (1, 2), (3, 3)]).unwrap();
    b.push_small(&[(0, 2), (1, 3), (3, 4)]).unwrap();
    b.push_small(&[(0, 3), (1, 5), (3, 7)]).unwrap();
    let a = b.build().unwrap();
    let out = sge_reduce(&a, &SgeOptions::default());
    assert!(out
        .transcript
        .steps
        .contains(&SgeStep::DropZeroColumn { col: 2 }));
    assert!(!out.transcript.column_map.contains(&2));
    let r = &out.matrix;
    let w = common::dense_kernel_vector(m.ell(), &common::dense_big(r), r.ncols()).unwrap();
    let lifted = lift_kernel(&out.transcript, &to_residues(&m, &w)).unwrap();
    assert!(lifted[2].is_zero());
    assert!(common::is_kernel(&a, &lifted));
    let unit = lift_zero_column(&out.transcript, 2).unwrap();
    assert_eq!(unit[2], m.one());
    assert!(common::is_kernel(&a, &unit));
    assert!(lift_zero_column(&out.transcript, 0).is_err());
}

#[test]
fn identity_reduces_to_nothing() {
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    let a = SparseMatrix::identity(&m, 10);
    assert_eq!(projected_cost(&a), 100);
    let out = sge_reduce(&a, &SgeOptions::default());
    assert_eq!((out.matrix.nrows(), out.matrix.ncols()), (0, 0));
    assert_eq!(*out.report.cost_history.last().unwrap(), 0);
    let lifted = lift_kernel(&out.transcript, &[]).unwrap();
    assert_eq!(lifted.len(), 10);
    assert!(lifted.iter().all(|x| x.is_zero()));
}

#[test]
fn ffs_cost_arithmetic() {
    // 1000 rows of weight 100
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    let mut b = MatrixBuilder::new(&m, 1000);
    for i in 0..1000 {
        let row: Vec<(usize, i64)> = (0..100).map(|k| ((i + 7 * k) % 1000, 1)).collect();
        b.push_small(&row).unwrap();
    }
    let a = b.build().unwrap();
    assert_eq!(projected_cost(&a), 100_000_000);
}

#[test]
fn memory_budget_stops_early() {
    let m = PrimeModulus::from_prime_u64(1_000_000_007).unwrap();
    let a = common::sparse_corpus(&m, 400, 9);
    let with_budget = |bytes| {
        sge_reduce(
            &a,
            &SgeOptions {
                memory_budget_bytes: Some(bytes),
                ..Default::default()
            },
        )
    };
    let met = with_budget(a.nnz() as u64 * 12);
    assert_eq!(met.report.stop_reason, StopReason::MemoryBudgetMet);
    assert!(met.transcript.steps.is_empty());
    let full = sge_reduce(&a, &SgeOptions::default());
    assert_ne!(full.report.stop_reason, StopReason::MemoryBudgetMet);
    assert_eq!(with_budget(0).transcript.steps, full.transcript.steps);
}
