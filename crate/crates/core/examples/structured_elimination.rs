//! Structured Gaussian elimination on a sparse corpus matrix, then lifting
//! a kernel vector of the reduced system back to the original.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::PrimeModulus;
use sldlag::pipeline::square_up;
use sldlag::sge::{lift_kernel, projected_cost, sge_reduce, SgeOptions};
use sldlag::solver::{solve, verify_kernel, MatrixOperator, SolveOptions};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ell = PrimeModulus::random(&mut rng, 64).expect("prime");
    // light rows and a steep density curve leave many columns of weight <= 2
    let profile = profile_ffs()
        .with_n(600)
        .with_gamma(6)
        .with_density_decay(1.0)
        .with_seed(5);
    let a = generate(&profile, &ell).expect("valid profile");

    let out = sge_reduce(&a, &SgeOptions::default());
    let r = &out.matrix;
    println!("original {}x{}, nnz {}", a.nrows(), a.ncols(), a.nnz());
    println!("reduced  {}x{}, nnz {}", r.nrows(), r.ncols(), r.nnz());
    println!("stop: {:?}", out.report.stop_reason);
    println!(
        "projected cost {} -> {}",
        projected_cost(&a),
        out.report.cost_history.last().unwrap()
    );

    // replaying the transcript reproduces the reduced matrix
    assert_eq!(&out.transcript.replay(&a).expect("replay"), r);

    let sq = square_up(r, 1);
    let op = MatrixOperator::new(&sq).expect("square");
    for seed in 0.. {
        let rep = solve(
            &op,
            &SolveOptions {
                seed,
                ..Default::default()
            },
        )
        .expect("solver");
        let x = &rep.kernel.w[..r.ncols()];
        if !verify_kernel(r, x) {
            continue;
        }
        let w = lift_kernel(&out.transcript, x).expect("lift");
        assert!(verify_kernel(&a, &w));
        println!("lifted kernel vector checks out on the original matrix (seed {seed})");
        break;
    }
}
