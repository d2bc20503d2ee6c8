mod common;

use num_bigint::BigUint;
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate_with_witness, profile_ffs};
use sldlag::error::SolverError;
use sldlag::modring::{PrimeModulus, Residue};
use sldlag::solver::bm::annihilates;
use sldlag::solver::{
    berlekamp_massey, block_lingen, krylov_block, krylov_scalar, lingen_candidates, mksol_block,
    mksol_scalar, solve, vanishing_combinations, verify_kernel, Algorithm, BlockSequence,
    BlockVector, BlockingParams, Generators, MatrixOperator, SolveOptions,
};
use sldlag::spmatrix::{MatrixBuilder, SparseMatrix};

fn p1009() -> PrimeModulus {
    PrimeModulus::from_prime_u64(1009).unwrap()
}

fn p30() -> PrimeModulus {
    PrimeModulus::from_prime_u64(1_000_000_007).unwrap()
}

/// Sequence satisfying the monic recurrence `f` (low degree first).
fn recurrence(m: &PrimeModulus, f: &[Residue], init: &[Residue], len: usize) -> Vec<Residue> {
    let d = f.len() - 1;
    let mut s = init.to_vec();
    while s.len() < len {
        let k = s.len() - d;
        let mut acc = m.zero();
        for i in 0..d {
            acc = m.sub(&acc, &m.mul(&f[i], &s[k + i]));
        }
        s.push(acc);
    }
    s
}

/// Random singular `n×n` matrix: the last column is a combination of two others.
fn singular(m: &PrimeModulus, n: usize, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MatrixBuilder::new(m, n);
    for _ in 0..n {
        let mut row: Vec<(usize, i64)> = (0..4)
            .map(|_| (rng.gen_range(0..n - 1), rng.gen_range(-9i64..=9)))
            .collect();
        let v0: i64 = row.iter().filter(|e| e.0 == 0).map(|e| e.1).sum();
        let v1: i64 = row.iter().filter(|e| e.0 == 1).map(|e| e.1).sum();
        row.push((n - 1, 2 * v0 - 3 * v1));
        b.push_small(&row).unwrap();
    }
    b.build().unwrap()
}

fn dense_block_oracle(
    p: &BigUint,
    a: &SparseMatrix,
    x: &BlockVector,
    y: &BlockVector,
    count: usize,
) -> Vec<Vec<BigUint>> {
    let dense = common::dense_big(a);
    let (n, mm) = (y.width(), x.width());
    let cols: Vec<Vec<BigUint>> = (0..mm)
        .flat_map(|r| (0..n).map(move |j| (r, j)))
        .map(|(r, j)| {
            common::dense_krylov(
                p,
                &dense,
                &common::bigs(&x.columns[r]),
                &common::bigs(&y.columns[j]),
                count,
            )
        })
        .collect();
    (0..count)
        .map(|k| cols.iter().map(|c| c[k].clone()).collect())
        .collect()
}

#[test]
fn krylov_scalar_trivial_operators() {
    let m = p1009();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = common::random_vec(&m, 8, &mut rng);
    let y = common::random_vec(&m, 8, &mut rng);
    let xy = common::dot(m.ell(), &common::bigs(&x), &common::bigs(&y));
    let zero = MatrixOperator::new(&SparseMatrix::zero(&m, 8, 8)).unwrap();
    let seq = common::bigs(&krylov_scalar(&zero, &x, &y, 5).unwrap());
    assert_eq!(seq[0], xy);
    assert!(seq[1..].iter().all(|s| s.is_zero()));
    let id = MatrixOperator::new(&SparseMatrix::identity(&m, 8)).unwrap();
    let seq = common::bigs(&krylov_scalar(&id, &x, &y, 5).unwrap());
    assert!(seq.iter().all(|s| *s == xy));
    assert!(krylov_scalar(&id, &x[..7], &y, 5).is_err());
}

#[test]
fn krylov_scalar_matches_dense_powers() {
    let m = p1009();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = common::random_sparse(&m, 20, 4, &mut rng);
    let x = common::random_vec(&m, 20, &mut rng);
    let y = common::random_vec(&m, 20, &mut rng);
    let op = MatrixOperator::new(&a).unwrap();
    let want = common::dense_krylov(
        m.ell(),
        &common::dense_big(&a),
        &common::bigs(&x),
        &common::bigs(&y),
        45,
    );
    assert_eq!(common::bigs(&krylov_scalar(&op, &x, &y, 45).unwrap()), want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// A planted recurrence is recovered exactly whenever the Hankel rank
    /// says it is minimal; otherwise BM must find something shorter.
    #[test]
    fn bm_recovers_planted_recurrence(seed in any::<u64>(), d in 0usize..=50) {
        let m = p1009();
        let p = m.ell().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = common::random_vec(&m, d, &mut rng);
        f.push(m.one());
        let init = common::random_vec(&m, d, &mut rng);
        let seq = recurrence(&m, &f, &init, 2 * d + 4);
        prop_assert!(annihilates(&m, &seq, &f));
        let got = berlekamp_massey(&m, &seq);
        prop_assert!(annihilates(&m, &seq, &got.coeffs));
        let bs = common::bigs(&seq);
        let rank = common::hankel_rank(&p, &bs, d + 1);
        prop_assert_eq!(got.degree(), rank);
        if rank == d {
            prop_assert_eq!(got.coeffs, f);
        }
        prop_assert_eq!(got.zero_sequence, seq.iter().all(|s| s.is_zero()));
    }
}

#[test]
fn bm_degree_25() {
    let m = p1009();
    let p = m.ell().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    loop {
        let mut f = common::random_vec(&m, 25, &mut rng);
        f.push(m.one());
        let init = common::random_vec(&m, 25, &mut rng);
        let seq = recurrence(&m, &f, &init, 60);
        if common::hankel_rank(&p, &common::bigs(&seq), 26) < 25 {
            continue;
        }
        let got = berlekamp_massey(&m, &seq);
        assert_eq!(got.coeffs, f);
        // no polynomial of degree 24 fits: the 25×25 Hankel matrix is regular
        assert_eq!(common::hankel_rank(&p, &common::bigs(&seq), 25), 25);
        break;
    }
    let z = berlekamp_massey(&m, &vec![m.zero(); 10]);
    assert!(z.zero_sequence);
    assert_eq!(z.coeffs, vec![m.one()]);
}

#[test]
fn block_krylov_with_one_column_is_scalar() {
    let m = p30();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = common::random_sparse(&m, 30, 5, &mut rng);
    let op = MatrixOperator::new(&a).unwrap();
    let x = BlockVector::random(&m, 1, 30, &mut rng);
    let y = BlockVector::random(&m, 1, 30, &mut rng);
    let block = krylov_block(&op, &x, &y, 62).unwrap();
    let scalar = krylov_scalar(&op, &x.columns[0], &y.columns[0], 62).unwrap();
    assert_eq!(block.sequence.column(0, 0), scalar);
    assert_eq!(block.columns[0].spmvs, 62);
}

#[test]
fn block_krylov_matches_dense_oracle() {
    let m = p1009();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = common::random_sparse(&m, 40, 4, &mut rng);
    let op = MatrixOperator::new(&a).unwrap();
    let x = BlockVector::random(&m, 4, 40, &mut rng);
    let y = BlockVector::random(&m, 2, 40, &mut rng);
    let count = BlockingParams::new(2, 4).unwrap().sequence_length(40, 4);
    assert_eq!(count, 20 + 10 + 4);
    let got = krylov_block(&op, &x, &y, count).unwrap();
    let want = dense_block_oracle(m.ell(), &a, &x, &y, count);
    let got: Vec<Vec<BigUint>> = got.sequence.terms.iter().map(|t| common::bigs(t)).collect();
    assert_eq!(got, want);

    // identity: every term equals ᵀX·Y
    let id = MatrixOperator::new(&SparseMatrix::identity(&m, 40)).unwrap();
    let s = krylov_block(&id, &x, &y, 5).unwrap().sequence;
    assert!(s.terms.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn scalar_lingen_agrees_with_bm() {
    let m = p30();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = singular(&m, 25, seed);
        let op = MatrixOperator::new(&a).unwrap();
        let x = BlockVector::random(&m, 1, 25, &mut rng);
        let y = BlockVector::random(&m, 1, 25, &mut rng);
        let seq = krylov_block(&op, &x, &y, 25 + 25 + 8).unwrap().sequence;
        let f = berlekamp_massey(&m, &seq.column(0, 0));
        let g = block_lingen(&m, &seq, 25).unwrap();
        let top = g.effective_degree();
        assert_eq!(top, f.degree(), "seed {seed}");
        assert_eq!(&g.polys[0][..=top], &f.coeffs[..], "seed {seed}");
    }
}

#[test]
fn block_lingen_window_check_at_60() {
    let m = p30();
    let a = singular(&m, 60, 60);
    let op = MatrixOperator::new(&a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let x = BlockVector::random(&m, 4, 60, &mut rng);
    let y = BlockVector::random(&m, 2, 60, &mut rng);
    let count = BlockingParams::new(2, 4).unwrap().sequence_length(60, 8);
    let seq = krylov_block(&op, &x, &y, count).unwrap().sequence;
    let gens = lingen_candidates(&m, &seq, 60).unwrap();
    for g in &gens {
        assert!(g.degree <= 30);
        assert!(g.annihilates(&m, &seq));
        // checked again by brute force over the whole window
        for k in 0..count - g.degree {
            for r in 0..4 {
                let mut acc = BigUint::zero();
                for i in 0..=g.degree {
                    for j in 0..2 {
                        acc += common::big(seq.get(k + i, r, j)) * common::big(&g.polys[j][i]);
                    }
                }
                assert!((acc % m.ell()).is_zero());
            }
        }
    }
    for c in vanishing_combinations(&m, &gens) {
        assert!(c.valuation() > 0);
        assert!(c.annihilates(&m, &seq));
    }
}

#[test]
fn block_lingen_finds_planted_recurrence() {
    // a_k = a_0·C^k, so each column of X·I − C is a degree-1 generator
    let m = p30();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c: Vec<Residue> = common::random_vec(&m, 4, &mut rng);
    let mut a = common::random_vec(&m, 4, &mut rng);
    let mut terms = Vec::new();
    for _ in 0..20 {
        terms.push(a.clone());
        // a (2×2, row-major) ← a·C
        let next = (0..2)
            .flat_map(|r| (0..2).map(move |j| (r, j)))
            .map(|(r, j)| m.add(&m.mul(&a[2 * r], &c[j]), &m.mul(&a[2 * r + 1], &c[2 + j])))
            .collect();
        a = next;
    }
    let seq = BlockSequence { m: 2, n: 2, terms };
    let g = block_lingen(&m, &seq, 2).unwrap();
    assert!(g.annihilates(&m, &seq));
    assert_eq!(g.effective_degree(), 1);
    // F(X) = X·f_1 + f_0 with f_0 = −C·f_1
    let f1 = g.coefficient(1);
    let f0 = g.coefficient(0);
    for r in 0..2 {
        let cf = m.add(&m.mul(&c[2 * r], &f1[0]), &m.mul(&c[2 * r + 1], &f1[1]));
        assert_eq!(m.add(&f0[r], &cf), m.zero());
    }
}

#[test]
fn scalar_mksol_on_planted_50() {
    let m = p30();
    let a = singular(&m, 50, 50);
    let op = MatrixOperator::new(&a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = common::random_vec(&m, 50, &mut rng);
    let y = common::random_vec(&m, 50, &mut rng);
    let seq = krylov_scalar(&op, &x, &y, 104).unwrap();
    let f = berlekamp_massey(&m, &seq);
    assert!(f.coeffs[0].is_zero());
    let run = mksol_scalar(&op, &y, &f.coeffs).unwrap();
    assert!(common::is_kernel(&a, &run.kernel.w));
    assert!(common::is_nonzero(&run.kernel.w));
    assert_eq!(run.horner_spmvs as usize, f.degree() - run.valuation);

    let block = mksol_block(
        &op,
        &BlockVector {
            columns: vec![y.clone()],
        },
        &Generators {
            polys: vec![f.coeffs.clone()],
            degree: f.degree(),
        },
    )
    .unwrap();
    assert_eq!(block.kernel, run.kernel);
}

#[test]
fn scalar_mksol_on_identity_fails() {
    let m = p30();
    let id = SparseMatrix::identity(&m, 10);
    let op = MatrixOperator::new(&id).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = common::random_vec(&m, 10, &mut rng);
    let y = common::random_vec(&m, 10, &mut rng);
    let f = berlekamp_massey(&m, &krylov_scalar(&op, &x, &y, 22).unwrap());
    assert_eq!(f.degree(), 1);
    assert!(matches!(
        mksol_scalar(&op, &y, &f.coeffs),
        Err(SolverError::SolverFailure)
    ));
    let opts = SolveOptions {
        algorithm: Algorithm::Wiedemann,
        ..Default::default()
    };
    assert!(solve(&op, &opts).is_err());
}

fn corpus_solve(bits: u64, n: usize, bp: (usize, usize), seed: u64) {
    let m = common::modulus_bits(bits, seed);
    let prof = profile_ffs().with_n(n).with_gamma(20).with_seed(seed);
    let a = sldlag::corpus::generate(&prof, &m).unwrap();
    let op = MatrixOperator::new(&a).unwrap();
    let opts = SolveOptions {
        blocking: BlockingParams::new(bp.0, bp.1).unwrap(),
        seed,
        ..Default::default()
    };
    let r = solve(&op, &opts).unwrap();
    assert!(common::is_kernel(&a, &r.kernel.w));
    assert!(common::is_nonzero(&r.kernel.w));
    let s = &r.stats;
    let count = (n.div_ceil(bp.0) + n.div_ceil(bp.1) + 32) as u64;
    assert!(s.krylov_spmvs.iter().all(|&k| k == count));
    assert_eq!(s.krylov_spmvs.len(), bp.0);
    assert_eq!(
        s.mksol_horner_spmvs as usize,
        s.generator_degree - s.generator_valuation
    );
}

#[test]
fn block_solve_corpus_500_64_bit() {
    corpus_solve(64, 500, (2, 4), 1);
}

#[test]
fn block_solve_corpus_2000_200_bit() {
    corpus_solve(200, 2000, (4, 8), 2);
}

#[test]
fn verify_kernel_cases() {
    let m = p30();
    let prof = profile_ffs().with_n(300).with_gamma(10).with_seed(3);
    let out = generate_with_witness(&prof, &m).unwrap();
    let a = &out.matrix;
    assert!(!verify_kernel(a, &vec![m.zero(); 300]));
    let w = out.planted[0].witness(&m, 300);
    assert!(verify_kernel(a, &w));
    assert!(common::is_kernel(a, &w));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        assert!(!verify_kernel(a, &common::random_vec(&m, 300, &mut rng)));
    }
    assert!(!verify_kernel(a, &w[..299]));
}
