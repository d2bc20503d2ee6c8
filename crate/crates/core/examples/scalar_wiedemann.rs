//! Plain Wiedemann on a small singular matrix: one Krylov sequence,
//! Berlekamp–Massey, then the kernel vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::PrimeModulus;
use sldlag::solver::{
    berlekamp_massey, krylov_scalar, mksol_scalar, verify_kernel, LinearOperator, MatrixOperator,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ell = PrimeModulus::random(&mut rng, 64).expect("prime");
    let a = generate(&profile_ffs().with_n(400).with_gamma(20).with_seed(3), &ell)
        .expect("valid profile");
    let op = MatrixOperator::new(&a).expect("square");
    let n = op.dim();

    for attempt in 0.. {
        let x: Vec<_> = (0..n).map(|_| ell.random_residue(&mut rng)).collect();
        let y: Vec<_> = (0..n).map(|_| ell.random_residue(&mut rng)).collect();
        let seq = krylov_scalar(&op, &x, &y, 2 * n + 8).expect("krylov");
        let f = berlekamp_massey(&ell, &seq);
        println!(
            "attempt {attempt}: minimal polynomial of degree {}",
            f.degree()
        );
        match mksol_scalar(&op, &y, &f.coeffs) {
            Ok(run) => {
                assert!(verify_kernel(&a, &run.kernel.w));
                println!(
                    "kernel vector found: {} Horner products, {} tail products, X-valuation {}",
                    run.horner_spmvs, run.tail_spmvs, run.valuation
                );
                break;
            }
            Err(e) => println!("  no kernel vector from this pair ({e}), retrying"),
        }
    }
}
