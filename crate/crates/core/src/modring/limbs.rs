//! Fixed-width little-endian limb arithmetic and Montgomery multiplication.
//!
//! All slices passed to the routines in this module have the same length
//! `l = n.len()`, with `l <= MAX_LIMBS`.

/// Largest supported modulus width in 64-bit limbs (1024 bits).
pub const MAX_LIMBS: usize = 16;

/// `-n0^{-1} mod 2^64` for odd `n0`.
pub fn mont_n0inv(n0: u64) -> u64 {
    debug_assert!(n0 & 1 == 1);
    let mut inv: u64 = 1;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(n0.wrapping_mul(inv)));
    }
    inv.wrapping_neg()
}

/// Returns true when `a < b` (equal lengths).
#[inline]
pub fn lt(a: &[u64], b: &[u64]) -> bool {
    for i in (0..a.len()).rev() {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// `a -= b`, returns the borrow.
#[inline]
pub fn sub_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut borrow = false;
    for i in 0..a.len() {
        let (d, b1) = a[i].overflowing_sub(b[i]);
        let (d, b2) = d.overflowing_sub(borrow as u64);
        a[i] = d;
        borrow = b1 | b2;
    }
    borrow
}

/// `a += b`, returns the carry.
#[inline]
pub fn add_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut carry = false;
    for i in 0..a.len() {
        let (s, c1) = a[i].overflowing_add(b[i]);
        let (s, c2) = s.overflowing_add(carry as u64);
        a[i] = s;
        carry = c1 | c2;
    }
    carry
}

/// `out = (a + b) mod n` for `a, b < n`.
#[inline]
pub fn add_mod(a: &[u64], b: &[u64], n: &[u64], out: &mut [u64]) {
    out.copy_from_slice(a);
    let carry = add_assign(out, b);
    if carry || !lt(out, n) {
        sub_assign(out, n);
    }
}

/// `out = (a - b) mod n` for `a, b < n`.
#[inline]
pub fn sub_mod(a: &[u64], b: &[u64], n: &[u64], out: &mut [u64]) {
    out.copy_from_slice(a);
    if sub_assign(out, b) {
        add_assign(out, n);
    }
}

/// Montgomery product `out = a * b * 2^{-64 l} mod n`.
///
/// Requires `b < n` and `a < 2^{64 l}`; the result is canonical.
pub fn mont_mul(a: &[u64], b: &[u64], n: &[u64], n0inv: u64, out: &mut [u64]) {
    let l = n.len();
    let mut t = [0u64; MAX_LIMBS + 2];
    for &ai in a.iter().take(l) {
        let ai = ai as u128;
        let mut carry: u64 = 0;
        for j in 0..l {
            let s = t[j] as u128 + ai * b[j] as u128 + carry as u128;
            t[j] = s as u64;
            carry = (s >> 64) as u64;
        }
        let s = t[l] as u128 + carry as u128;
        t[l] = s as u64;
        t[l + 1] = (s >> 64) as u64;

        let q = t[0].wrapping_mul(n0inv) as u128;
        let s = t[0] as u128 + q * n[0] as u128;
        let mut carry = (s >> 64) as u64;
        for j in 1..l {
            let s = t[j] as u128 + q * n[j] as u128 + carry as u128;
            t[j - 1] = s as u64;
            carry = (s >> 64) as u64;
        }
        let s = t[l] as u128 + carry as u128;
        t[l - 1] = s as u64;
        t[l] = t[l + 1] + (s >> 64) as u64;
        t[l + 1] = 0;
    }
    if t[l] != 0 || !lt(&t[..l], n) {
        sub_assign(&mut t[..l], n);
    }
    out.copy_from_slice(&t[..l]);
}

/// Remainder of a little-endian multi-limb integer by a word modulus.
#[inline]
pub fn rem_word(x: &[u64], pows: &[u64], m: u64) -> u64 {
    // pows[t] = 2^{64 t} mod m, m < 2^62; three products fit in a u128.
    let mut acc: u128 = 0;
    for (chunk, pchunk) in x.chunks(3).zip(pows.chunks(3)) {
        for (&xi, &pi) in chunk.iter().zip(pchunk) {
            acc += xi as u128 * pi as u128;
        }
        acc %= m as u128;
    }
    acc as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn big(l: &[u64]) -> BigUint {
        let mut v = BigUint::default();
        for &x in l.iter().rev() {
            v = (v << 64u32) + x;
        }
        v
    }

    #[test]
    fn n0inv_is_negated_inverse() {
        for n0 in [1u64, 3, 0xffff_ffff_ffff_ffc5, 12345677] {
            assert_eq!(n0.wrapping_mul(mont_n0inv(n0)), u64::MAX);
        }
    }

    #[test]
    fn mont_mul_matches_bigint() {
        // n = 2^127 - 1
        let n = [u64::MAX, (1u64 << 63) - 1];
        let inv = mont_n0inv(n[0]);
        let a = [0x1234_5678_9abc_def0, 0x0fed_cba9_8765_4321];
        let b = [0xdead_beef_0000_0001, 0x1111_2222_3333_4444];
        let mut out = [0u64; 2];
        mont_mul(&a, &b, &n, inv, &mut out);
        let r = BigUint::from(1u32) << 128u32;
        let nb = big(&n);
        let rinv = r.modinv(&nb).unwrap();
        assert_eq!(big(&out), big(&a) * big(&b) * rinv % nb);
    }

    #[test]
    fn rem_word_matches_bigint() {
        let m = (1u64 << 61) - 1;
        let x = [u64::MAX, 7, u64::MAX - 3, 99, 1 << 40];
        let mut pows = vec![1u64];
        for _ in 1..x.len() {
            let p = *pows.last().unwrap() as u128;
            pows.push(((p << 64) % m as u128) as u64);
        }
        assert_eq!(
            BigUint::from(rem_word(&x, &pows, m)),
            big(&x) % BigUint::from(m)
        );
    }
}
