//! Synthetic FFS- and NFS-like matrices with a planted kernel, written to
//! disk and read back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate_with_witness, profile_ffs, profile_nfs};
use sldlag::modring::PrimeModulus;
use sldlag::solver::verify_kernel;
use sldlag::spmatrix::{load_matrix, matrix_stats, store_matrix};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ell = PrimeModulus::random(&mut rng, 128).expect("prime");
    let dir = tempfile::tempdir().expect("temp dir");

    for (name, profile) in [
        ("ffs", profile_ffs().with_n(3000).with_seed(11)),
        (
            "nfs",
            profile_nfs().with_n(3000).with_dense_cols(5).with_seed(12),
        ),
    ] {
        let out = generate_with_witness(&profile, &ell).expect("valid profile");
        let a = &out.matrix;
        let s = matrix_stats(a);
        println!("== {name}");
        print!("{}", s.to_text());

        let w = out.planted[0].witness(&ell, a.ncols());
        assert!(verify_kernel(a, &w));
        println!(
            "planted relations: {}, first one is a kernel vector",
            out.planted.len()
        );

        let path = dir.path().join(format!("{name}.sldm"));
        store_matrix(a, &path).expect("write");
        let back = load_matrix(&path).expect("read");
        assert_eq!(&back, a);
        println!(
            "{} bytes on disk, round trip exact",
            std::fs::metadata(&path).unwrap().len()
        );
    }
}
