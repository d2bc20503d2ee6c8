//! Scalar Berlekamp–Massey.

use crate::modring::{PrimeModulus, Residue};

/// Minimal polynomial of a scalar sequence, low degree first and monic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalPolynomial {
    pub coeffs: Vec<Residue>,
    /// The input was identically zero; `coeffs` is then `[1]`.
    pub zero_sequence: bool,
}

impl MinimalPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Smallest-degree monic `F` with `Σ f_i·a_{k+i} = 0` for every `k` where
/// the sum stays inside `seq`.
pub fn berlekamp_massey(m: &PrimeModulus, seq: &[Residue]) -> MinimalPolynomial {
    // Connection polynomial C (C(0) = 1) of the current shortest LFSR.
    let mut c = vec![m.one()];
    let mut b = vec![m.one()];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut last_d = m.one();
    for k in 0..seq.len() {
        let mut d = seq[k].clone();
        for i in 1..=len.min(c.len() - 1) {
            m.add_assign(&mut d, &m.mul(&c[i], &seq[k - i]));
        }
        if d.is_zero() {
            shift += 1;
            continue;
        }
        let coef = m.mul(&d, &m.inv(&last_d).expect("non-zero discrepancy"));
        let mut next = c.clone();
        if next.len() < b.len() + shift {
            next.resize(b.len() + shift, m.zero());
        }
        for (i, bi) in b.iter().enumerate() {
            let t = m.mul(&coef, bi);
            next[i + shift] = m.sub(&next[i + shift], &t);
        }
        if 2 * len <= k {
            b = std::mem::replace(&mut c, next);
            len = k + 1 - len;
            last_d = d;
            shift = 1;
        } else {
            c = next;
            shift += 1;
        }
    }
    c.resize(len + 1, m.zero());
    let coeffs: Vec<Residue> = c.into_iter().rev().collect();
    MinimalPolynomial {
        zero_sequence: len == 0,
        coeffs,
    }
}

/// Whether `f` annihilates every window of `seq` it fits in.
pub fn annihilates(m: &PrimeModulus, seq: &[Residue], f: &[Residue]) -> bool {
    let d = f.len() - 1;
    (0..seq.len().saturating_sub(d)).all(|k| {
        let mut acc = m.zero();
        for (i, fi) in f.iter().enumerate() {
            m.add_assign(&mut acc, &m.mul(fi, &seq[k + i]));
        }
        acc.is_zero()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> PrimeModulus {
        PrimeModulus::from_prime_u64(1009).unwrap()
    }

    fn vals(m: &PrimeModulus, v: &[i64]) -> Vec<Residue> {
        v.iter().map(|&x| m.from_i64(x)).collect()
    }

    #[test]
    fn constant_sequence() {
        let m = m();
        let f = berlekamp_massey(&m, &vals(&m, &[7; 10]));
        assert_eq!(f.coeffs, vals(&m, &[-1, 1]));
    }

    #[test]
    fn fibonacci() {
        let m = m();
        let mut s = vec![1i64, 1];
        for k in 2..20 {
            s.push((s[k - 1] + s[k - 2]) % 1009);
        }
        let f = berlekamp_massey(&m, &vals(&m, &s));
        assert_eq!(f.coeffs, vals(&m, &[-1, -1, 1]));
    }

    #[test]
    fn zero_sequence_is_flagged() {
        let m = m();
        let f = berlekamp_massey(&m, &vals(&m, &[0; 8]));
        assert!(f.zero_sequence);
        assert_eq!(f.coeffs, vals(&m, &[1]));
    }

    #[test]
    fn leading_zeros_give_power_of_x() {
        let m = m();
        let f = berlekamp_massey(&m, &vals(&m, &[0, 0, 5, 0, 0, 0, 0, 0]));
        assert!(annihilates(
            &m,
            &vals(&m, &[0, 0, 5, 0, 0, 0, 0, 0]),
            &f.coeffs
        ));
        assert_eq!(f.degree(), 3);
    }
}
