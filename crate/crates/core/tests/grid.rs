mod common;

use std::ops::ControlFlow;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::balance::{balance_permutation, pad_matrix, split, BlockSplit, GridSpec};
use sldlag::error::GridError;
use sldlag::gridmv::{
    comm_volume_model, comm_volume_square, grid_spmv, FaultPlan, GridConfig, GridOperator,
    Schedule, TransportKind,
};
use sldlag::modring::{PrimeModulus, Residue};
use sldlag::spmatrix::spmv_sequential;

fn setup(m: &PrimeModulus, n: usize, r: usize, c: usize, seed: u64) -> (BlockSplit, Vec<Residue>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = common::random_mixed(m, n, 4, &mut rng);
    let g = GridSpec::new(r, c).unwrap();
    let bs = split(&a, &balance_permutation(&a, g).unwrap(), g).unwrap();
    let u = common::random_vec(m, bs.n_padded, &mut rng);
    (bs, u)
}

/// `k` products by the permuted padded matrix, done with big integers.
fn oracle(
    bs: &BlockSplit,
    a_padded: &[Vec<num_bigint::BigUint>],
    u: &[Residue],
    k: usize,
) -> Vec<Residue> {
    let m = bs.blocks[0].modulus();
    let p = m.ell();
    let rows: Vec<Vec<_>> = bs
        .perm
        .row_perm
        .iter()
        .map(|&r| {
            bs.perm
                .col_perm
                .iter()
                .map(|&c| a_padded[r][c].clone())
                .collect()
        })
        .collect();
    let mut v = common::bigs(u);
    for _ in 0..k {
        v = common::mat_vec(p, &rows, &v);
    }
    v.iter().map(|x| m.try_residue(x).unwrap()).collect()
}

fn config(transport: TransportKind, schedule: Schedule) -> GridConfig {
    GridConfig {
        transport,
        schedule,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grid_product_equals_sequential(seed in any::<u64>(), n in 1usize..80, r in 1usize..5, c in 1usize..5, wide in any::<bool>()) {
        let m = if wide { common::modulus_bits(200, seed % 3) } else { PrimeModulus::from_prime_u64(1009).unwrap() };
        let (bs, u) = setup(&m, n, r, c, seed);
        let expect = spmv_sequential(&bs.assemble(), &u).unwrap();
        let model = comm_volume_model(bs.grid, bs.n_padded, m.residue_bytes());
        let (v, log) = grid_spmv(bs, &u, &GridConfig::default()).unwrap();
        prop_assert_eq!(v, expect);
        prop_assert_eq!(log.len(), 1);
        prop_assert!(log.iterations[0].same_volume(&model));
        prop_assert_eq!(log.total_bytes(), model.bytes());
    }

    #[test]
    fn iterations_match_sequential_powers(seed in any::<u64>(), r in 1usize..4, c in 1usize..4, k in 0u64..6) {
        let m = PrimeModulus::from_prime_u64(1_000_003).unwrap();
        let (bs, u) = setup(&m, 30, r, c, seed);
        let b = bs.assemble();
        let mut expect = u.clone();
        for _ in 0..k {
            expect = spmv_sequential(&b, &expect).unwrap();
        }
        let model = comm_volume_model(bs.grid, bs.n_padded, m.residue_bytes());
        let op = GridOperator::new(bs, GridConfig::default());
        let mut seen = Vec::new();
        let (v, log) = op.run(&u, k, |t, _| { seen.push(t); ControlFlow::Continue(()) }).unwrap();
        prop_assert_eq!(v, expect);
        prop_assert_eq!(seen, (1..=k).collect::<Vec<_>>());
        prop_assert_eq!(log.len() as u64, k);
        prop_assert_eq!(log.total_bytes(), k * model.bytes());
    }
}

#[test]
fn shapes_on_64_by_64_against_big_integer_oracle() {
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    for (r, c) in [(2, 2), (4, 4), (2, 4), (2, 1), (1, 1)] {
        let mut rng = ChaCha8Rng::seed_from_u64((r * 10 + c) as u64);
        let a = common::random_sparse(&m, 64, 5, &mut rng);
        let g = GridSpec::new(r, c).unwrap();
        let bs = split(&a, &balance_permutation(&a, g).unwrap(), g).unwrap();
        let padded = common::dense_big(&pad_matrix(&a, bs.n_padded));
        let u = common::random_vec(&m, bs.n_padded, &mut rng);
        let op = GridOperator::new(bs.clone(), GridConfig::default());
        for k in [0u64, 1, 2, 10] {
            let (v, log) = op.run(&u, k, |_, _| ControlFlow::Continue(())).unwrap();
            assert_eq!(v, oracle(&bs, &padded, &u, k as usize), "{r}x{c} k={k}");
            assert_eq!(log.len() as u64, k);
        }
    }
}

#[test]
fn transports_and_schedules_agree() {
    let m = common::modulus_bits(130, 2);
    let (bs, u) = setup(&m, 50, 3, 2, 8);
    let expect = spmv_sequential(
        &bs.assemble(),
        &spmv_sequential(&bs.assemble(), &u).unwrap(),
    )
    .unwrap();
    for t in [TransportKind::Channel, TransportKind::Socket] {
        for s in [Schedule::Sequential, Schedule::Threaded] {
            let op = GridOperator::new(bs.clone(), config(t, s));
            let (v, log) = op.run(&u, 2, |_, _| ControlFlow::Continue(())).unwrap();
            assert_eq!(v, expect, "{t:?} {s:?}");
            assert_eq!(
                log.total_bytes(),
                2 * comm_volume_model(bs.grid, bs.n_padded, m.residue_bytes()).bytes()
            );
        }
    }
}

#[test]
fn square_volume_formula() {
    assert_eq!(comm_volume_square(GridSpec::new(2, 2).unwrap(), 100), 400);
    assert_eq!(comm_volume_square(GridSpec::new(1, 1).unwrap(), 100), 0);
    let g = GridSpec::new(3, 3).unwrap();
    assert_eq!(
        comm_volume_model(g, 90, 8).bytes(),
        comm_volume_square(g, 30 * 8)
    );
}

#[test]
fn observer_can_stop_a_run() {
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    let (bs, u) = setup(&m, 20, 2, 2, 1);
    let op = GridOperator::new(bs, GridConfig::default());
    let err = op
        .run(&u, 10, |t, _| {
            if t == 3 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap_err();
    assert!(matches!(err, GridError::Interrupted));
}

#[test]
fn tampered_messages_are_detected() {
    let m = PrimeModulus::from_prime_u64(1009).unwrap();
    let (bs, u) = setup(&m, 20, 2, 2, 4);
    let retag = GridConfig {
        faults: FaultPlan {
            retag: vec![(0, (1, 0), (1, 1), 5)],
            ..Default::default()
        },
        ..Default::default()
    };
    assert!(matches!(
        grid_spmv(bs.clone(), &u, &retag),
        Err(GridError::Protocol { .. })
    ));
    let lost = GridConfig {
        timeout: Duration::from_millis(50),
        faults: FaultPlan {
            drop: vec![(0, (1, 0), (1, 1))],
            ..Default::default()
        },
        ..Default::default()
    };
    assert!(matches!(
        grid_spmv(bs, &u, &lost),
        Err(GridError::Timeout(..))
    ));
}
