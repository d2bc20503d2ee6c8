//! Primality testing and prime generation.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Random bases on top of the fixed small-prime bases.
///
/// 32 Miller-Rabin rounds bound the error of a composite passing by 4^-32 = 2^-64.
const RANDOM_ROUNDS: usize = 32;

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod_u64(r, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic primality test for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in SMALL_PRIMES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for a in SMALL_PRIMES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

fn miller_rabin_round(n: &BigUint, n1: &BigUint, d: &BigUint, s: u64, a: &BigUint) -> bool {
    let mut x = a.modpow(d, n);
    if x.is_one() || &x == n1 {
        return true;
    }
    for _ in 1..s {
        x = &x * &x % n;
        if &x == n1 {
            return true;
        }
    }
    false
}

/// Probabilistic primality test with error below 2^-64.
///
/// Bases are drawn from a fixed-seed generator so the answer is reproducible.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if n.bits() <= 64 {
        return is_prime_u64(n.to_u64_digits().first().copied().unwrap_or(0));
    }
    for p in SMALL_PRIMES {
        if (n % p).is_zero() {
            return false;
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    for p in SMALL_PRIMES {
        if !miller_rabin_round(n, &n1, &d, s, &BigUint::from(p)) {
            return false;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d0fb_45e5);
    let bits = n.bits();
    for _ in 0..RANDOM_ROUNDS {
        let a = loop {
            let cand = random_biguint(&mut rng, bits) % &n1;
            if cand > BigUint::one() {
                break cand;
            }
        };
        if !miller_rabin_round(n, &n1, &d, s, &a) {
            return false;
        }
    }
    true
}

/// Uniform integer in `[0, 2^bits)`.
pub fn random_biguint<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let words = bits.div_ceil(64) as usize;
    let mut limbs: Vec<u64> = (0..words).map(|_| rng.gen()).collect();
    let extra = (words as u64) * 64 - bits;
    if extra > 0 {
        if let Some(top) = limbs.last_mut() {
            *top &= u64::MAX >> extra;
        }
    }
    limbs_to_biguint(&limbs)
}

pub(crate) fn limbs_to_biguint(limbs: &[u64]) -> BigUint {
    let mut digits = Vec::with_capacity(limbs.len() * 2);
    for &l in limbs {
        digits.push(l as u32);
        digits.push((l >> 32) as u32);
    }
    BigUint::new(digits)
}

/// Random probable prime of exactly `bits` bits (`bits >= 3`).
pub fn random_prime<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    assert!(bits >= 3, "prime width must be at least 3 bits");
    loop {
        let mut cand = random_biguint(rng, bits);
        cand.set_bit(bits - 1, true);
        cand.set_bit(0, true);
        if cand.is_odd() && is_probable_prime(&cand) {
            return cand;
        }
    }
}

/// The `count` largest primes below `2^62`, in descending order.
pub fn word_primes_below_2_62(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut cand = (1u64 << 62) - 1;
    while out.len() < count {
        if is_prime_u64(cand) {
            out.push(cand);
        }
        cand -= 2;
    }
    out
}
