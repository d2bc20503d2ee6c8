//! Block Wiedemann step by step with blocking (4, 8): the block Krylov
//! sequence, a linear generator, and Mksol. `solve` does the same with
//! retries and checkpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::PrimeModulus;
use sldlag::solver::{
    krylov_block, lingen_candidates, mksol_block, solve, vanishing_combinations, verify_kernel,
    BlockVector, BlockingParams, LinearOperator, MatrixOperator, SolveOptions, DEFAULT_MARGIN,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ell = PrimeModulus::random(&mut rng, 200).expect("prime");
    let a = generate(&profile_ffs().with_n(800).with_gamma(40).with_seed(6), &ell)
        .expect("valid profile");
    let op = MatrixOperator::new(&a).expect("square");
    let dim = op.dim();
    let bp = BlockingParams::new(4, 8).unwrap();

    let x = BlockVector::random(&ell, bp.m, dim, &mut rng);
    let y = BlockVector::random(&ell, bp.n, dim, &mut rng);
    let count = bp.sequence_length(dim, DEFAULT_MARGIN);
    let kr = krylov_block(&op, &x, &y, count).expect("krylov");
    println!(
        "{} terms of an {}x{} sequence, {} SpMVs per column",
        kr.sequence.len(),
        bp.m,
        bp.n,
        kr.columns[0].spmvs
    );

    // The sigma-basis yields n generators of degree about N/n. One with a
    // zero constant term leads straight to the kernel; otherwise a constant
    // combination cancelling the constant terms does.
    let gens = lingen_candidates(&ell, &kr.sequence, dim).expect("generators");
    println!(
        "{} generators, degrees {:?} (N/n = {})",
        gens.len(),
        gens.iter().map(|g| g.degree).collect::<Vec<_>>(),
        dim / bp.n
    );
    let mut tries: Vec<_> = gens.iter().filter(|g| g.valuation() > 0).cloned().collect();
    tries.extend(vanishing_combinations(&ell, &gens));
    for gen in &tries {
        assert!(gen.annihilates(&ell, &kr.sequence));
        if let Ok(run) = mksol_block(&op, &y, gen) {
            assert!(verify_kernel(&a, &run.kernel.w));
            println!(
                "kernel vector after {} Horner + {} tail products",
                run.horner_spmvs, run.tail_spmvs
            );
            break;
        }
    }

    let opts = SolveOptions {
        blocking: bp,
        seed: 1,
        ..Default::default()
    };
    let rep = solve(&op, &opts).expect("solve");
    assert!(verify_kernel(&a, &rep.kernel.w));
    println!(
        "solve: {} attempt(s), krylov {:.2}s, lingen {:.2}s, mksol {:.2}s",
        rep.stats.attempts,
        rep.stats.krylov_seconds,
        rep.stats.lingen_seconds,
        rep.stats.mksol_seconds
    );
}
