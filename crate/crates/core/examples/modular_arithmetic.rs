//! Canonical arithmetic modulo a 200-bit prime, and the RNS path used by
//! the SpMV inner loop.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::modring::{rns_dot_accumulate, PrimeModulus, RnsContext};
use sldlag::spmatrix::Coefficient;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = PrimeModulus::random(&mut rng, 200).expect("prime");
    println!("ell = {} ({} bits)", m.ell(), m.bit_length());

    let a = m.random_residue(&mut rng);
    let b = m.random_nonzero(&mut rng);
    let prod = m.mul(&a, &b);
    let expect = (a.to_biguint() * b.to_biguint()) % m.ell();
    assert_eq!(prod.to_biguint(), expect);
    let b_inv = m.inv(&b).expect("non-zero");
    assert_eq!(m.mul(&b, &b_inv), m.one());
    println!("a*b = {}", prod.to_biguint());

    // Fermat: a^(ell-1) = 1
    let e = m.ell() - BigUint::from(1u32);
    assert_eq!(m.pow(&b, &e), m.one());

    // A row of 100 small coefficients, summed in RNS without reducing mod ell.
    let ctx = RnsContext::new(&m, 100, 1000);
    println!(
        "RNS moduli: {} words, M has {} bits",
        ctx.len(),
        ctx.product().bits()
    );
    let coeffs: Vec<Coefficient> = (0..100)
        .map(|t| match t % 3 {
            0 => Coefficient::PlusOne,
            1 => Coefficient::MinusOne,
            _ => Coefficient::Small(-t * 7),
        })
        .collect();
    let xs: Vec<_> = (0..100).map(|_| m.random_residue(&mut rng)).collect();
    let rns: Vec<_> = xs.iter().map(|x| ctx.to_rns(x)).collect();
    let fast = rns_dot_accumulate(&coeffs, &rns, &ctx).expect("within capacity");
    let mut slow = m.zero();
    for (c, x) in coeffs.iter().zip(&xs) {
        slow = m.add(&slow, &m.mul(&c.value(&m), x));
    }
    assert_eq!(ctx.from_rns(&fast), slow);
    println!("RNS row sum matches canonical arithmetic");
}
