//! One SpMV on a simulated grid of workers, checked against the
//! single-node product, with the communication log against the model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::balance::{balance_permutation, split, GridSpec};
use sldlag::corpus::{generate, profile_nfs};
use sldlag::gridmv::{comm_volume_model, grid_spmv, GridConfig, Schedule, TransportKind};
use sldlag::modring::PrimeModulus;
use sldlag::spmatrix::spmv_sequential;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ell = PrimeModulus::random(&mut rng, 200).expect("prime");
    let a = generate(
        &profile_nfs().with_n(2000).with_dense_cols(3).with_seed(8),
        &ell,
    )
    .expect("valid profile");

    for (r, c, transport, schedule) in [
        (2, 2, TransportKind::Channel, Schedule::Sequential),
        (2, 1, TransportKind::Channel, Schedule::Threaded),
        (3, 3, TransportKind::Socket, Schedule::Sequential),
    ] {
        let g = GridSpec::new(r, c).expect("grid");
        let bs = split(&a, &balance_permutation(&a, g).expect("balance"), g).expect("split");
        let n_padded = bs.n_padded;
        let reference = bs.assemble();
        let u: Vec<_> = (0..n_padded)
            .map(|_| ell.random_residue(&mut rng))
            .collect();

        let cfg = GridConfig {
            transport,
            schedule,
            ..GridConfig::default()
        };
        let (v, log) = grid_spmv(bs, &u, &cfg).expect("grid run");
        assert_eq!(v, spmv_sequential(&reference, &u).unwrap());

        let model = comm_volume_model(g, n_padded, ell.residue_bytes());
        let seen = log.iterations[0];
        assert!(seen.same_volume(&model));
        println!(
            "{r}x{c} {transport:?}/{schedule:?}: {} messages, {} bytes (model agrees), output matches",
            seen.messages(),
            seen.bytes()
        );
    }
}
