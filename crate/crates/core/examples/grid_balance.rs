//! Weight-balancing permutations for a 4x4 grid and their effect on the
//! per-node non-zero counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::balance::{balance_permutation, identity_permutation, imbalance, split, GridSpec};
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::PrimeModulus;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ell = PrimeModulus::random(&mut rng, 64).expect("prime");
    let a = generate(&profile_ffs().with_n(20_000).with_seed(2), &ell).expect("valid profile");
    let g = GridSpec::new(4, 4).expect("grid");

    let plain = split(&a, &identity_permutation(&a, g), g).expect("split");
    let perm = balance_permutation(&a, g).expect("balance");
    let balanced = split(&a, &perm, g).expect("split");

    println!("padded dimension: {}", perm.n_padded);
    for (name, bs) in [("identity", &plain), ("balanced", &balanced)] {
        println!("{name:>9}: imbalance {:.4}", imbalance(bs).unwrap());
        for row in bs.block_nnz().chunks(g.c) {
            println!("           {row:?}");
        }
    }
    // the split is a relabelling: reassembling gives back the permuted matrix
    assert_eq!(
        balanced.assemble().nnz(),
        a.nnz() + perm.n_padded - a.nrows()
    );
}
