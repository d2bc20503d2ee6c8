//! Residue number system over word-sized primes.
//!
//! A row dot product `Σ c_t·u_t` with small signed coefficients is
//! accumulated limb-wise modulo each `m_i` without ever reducing modulo ℓ.
//! The moduli product `M` exceeds four times the capacity bound
//! `γ_max · c_max · (ℓ − 1)`. The signed sum then sits well inside
//! `(−M/4, M/4)`, so the multiple of `M` to remove is found by rounding a
//! floating-point estimate, and the reconstruction is done directly modulo
//! ℓ with one Montgomery reduction per row.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use smallvec::SmallVec;

use super::limbs;
use super::prime::{limbs_to_biguint, word_primes_below_2_62};
use super::{to_limbs, PrimeModulus, Residue};
use crate::error::ArithError;
use crate::spmatrix::Coefficient;

/// Upper bound on the number of RNS moduli (enough for 1024-bit ℓ).
pub const MAX_RNS_MODULI: usize = 24;

/// Residues of one integer modulo every RNS modulus.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RnsValue {
    pub limbs: SmallVec<[u64; 8]>,
}

/// Moduli and CRT constants for a given ℓ and row-weight/coefficient bound.
#[derive(Clone, Debug)]
pub struct RnsContext {
    modulus: PrimeModulus,
    moduli: Vec<u64>,
    product: BigUint,
    capacity_bound: BigUint,
    gamma_max: usize,
    c_max: u64,
    /// `pows[i][t] = 2^{64 t} mod m_i` for t < limb count of ℓ.
    pows: Vec<Vec<u64>>,
    /// `(M/m_i)^{-1} mod m_i`.
    crt_inv: Vec<u64>,
    /// `M/m_i` as limbs, padded to `wide` limbs.
    cofactors: Vec<Vec<u64>>,
    /// `⌊crt_inv_i · 2^64 / m_i⌋`.
    shoup: Vec<u64>,
    inv_m: Vec<f64>,
    /// `(M/m_i)·R' mod ℓ` with `R' = 2^{64(l+2)}`, `l` limbs each.
    cof_mod: Vec<Vec<u64>>,
    /// `(−M)·R' mod ℓ`.
    neg_m_mod: Vec<u64>,
    product_limbs: Vec<u64>,
    wide: usize,
}

/// Extra limbs of the reduction radix `R'` above the limb count of ℓ.
const RADIX_EXTRA: usize = 2;
const WIDE_BUF: usize = 2 * super::MAX_LIMBS + RADIX_EXTRA + 2;

impl RnsContext {
    /// Chooses the smallest prefix of the largest primes below 2^62 whose
    /// product exceeds `4 · γ_max · c_max · (ℓ − 1)`.
    pub fn new(modulus: &PrimeModulus, gamma_max: usize, c_max: u64) -> Self {
        let gamma_max = gamma_max.max(1);
        let c_max = c_max.max(1);
        let capacity_bound =
            BigUint::from(gamma_max) * BigUint::from(c_max) * (modulus.ell() - 1u32);
        let target = &capacity_bound << 2u32;
        let candidates = word_primes_below_2_62(MAX_RNS_MODULI);
        let mut moduli = Vec::new();
        let mut product = BigUint::one();
        for p in candidates {
            if product > target {
                break;
            }
            product *= p;
            moduli.push(p);
        }
        assert!(product > target, "capacity bound exceeds RNS range");

        let l = modulus.limb_count();
        let pows = moduli
            .iter()
            .map(|&m| {
                let mut v = Vec::with_capacity(l);
                let mut p: u128 = 1;
                for _ in 0..l {
                    v.push(p as u64);
                    p = (p << 64) % m as u128;
                }
                v
            })
            .collect();
        let wide = (product.bits().div_ceil(64) as usize) + 1;
        let mut crt_inv = Vec::with_capacity(moduli.len());
        let mut cofactors = Vec::with_capacity(moduli.len());
        for &m in &moduli {
            let cof = &product / m;
            let cof_mod = (&cof % m).to_u64_digits().first().copied().unwrap_or(0);
            crt_inv.push(inv_mod_u64(cof_mod, m));
            cofactors.push(to_limbs(&cof, wide).to_vec());
        }
        let ell = modulus.ell();
        let radix = BigUint::one() << (64 * (l + RADIX_EXTRA));
        let shoup = moduli
            .iter()
            .zip(&crt_inv)
            .map(|(&m, &w)| (((w as u128) << 64) / m as u128) as u64)
            .collect();
        let inv_m = moduli.iter().map(|&m| 1.0 / m as f64).collect();
        let cof_mod = moduli
            .iter()
            .map(|&m| to_limbs(&(&product / m % ell * &radix % ell), l).to_vec())
            .collect();
        let neg_m = (ell - &product % ell) % ell;
        let neg_m_mod = to_limbs(&(neg_m * &radix % ell), l).to_vec();
        let product_limbs = to_limbs(&product, wide).to_vec();
        RnsContext {
            modulus: modulus.clone(),
            moduli,
            product,
            capacity_bound,
            gamma_max,
            c_max,
            pows,
            crt_inv,
            cofactors,
            shoup,
            inv_m,
            cof_mod,
            neg_m_mod,
            product_limbs,
            wide,
        }
    }

    pub fn modulus(&self) -> &PrimeModulus {
        &self.modulus
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    /// Product of all moduli.
    pub fn product(&self) -> &BigUint {
        &self.product
    }

    pub fn capacity_bound(&self) -> &BigUint {
        &self.capacity_bound
    }

    pub fn gamma_max(&self) -> usize {
        self.gamma_max
    }

    pub fn c_max(&self) -> u64 {
        self.c_max
    }

    /// True when a row's positive and negative parts can be summed in
    /// 128 bits without intermediate reduction.
    pub fn lazy_sums(&self) -> bool {
        (self.gamma_max as u128) * (self.c_max as u128) < 1u128 << 64
    }

    pub fn zero(&self) -> RnsValue {
        RnsValue {
            limbs: SmallVec::from_elem(0, self.len()),
        }
    }

    /// `limbs[i] = a mod m_i`.
    pub fn to_rns(&self, a: &Residue) -> RnsValue {
        let mut v = self.zero();
        self.to_rns_into(a, &mut v.limbs);
        v
    }

    #[inline]
    pub fn to_rns_into(&self, a: &Residue, out: &mut [u64]) {
        for (i, &m) in self.moduli.iter().enumerate() {
            out[i] = limbs::rem_word(a.limbs(), &self.pows[i], m);
        }
    }

    /// Centered CRT reconstruction reduced modulo ℓ.
    pub fn from_rns(&self, v: &RnsValue) -> Residue {
        self.from_rns_limbs(&v.limbs)
    }

    /// Exact integer in `[0, M)` with the given residues.
    fn crt_unsigned(&self, v: &[u64]) -> Vec<u64> {
        let mut x = vec![0u64; self.wide];
        for (i, &m) in self.moduli.iter().enumerate() {
            let t = (v[i] as u128 * self.crt_inv[i] as u128 % m as u128) as u64;
            if t == 0 {
                continue;
            }
            let mut carry: u64 = 0;
            for (xj, &cj) in x.iter_mut().zip(&self.cofactors[i]) {
                let s = *xj as u128 + t as u128 * cj as u128 + carry as u128;
                *xj = s as u64;
                carry = (s >> 64) as u64;
            }
        }
        while !limbs::lt(&x, &self.product_limbs) {
            limbs::sub_assign(&mut x, &self.product_limbs);
        }
        x
    }

    pub fn from_rns_limbs(&self, v: &[u64]) -> Residue {
        let l = self.modulus.limb_count();
        let big = l + RADIX_EXTRA;
        let mut acc = [0u64; WIDE_BUF];
        let mut frac = 0.0f64;
        for (i, &m) in self.moduli.iter().enumerate() {
            // t = v·crt_inv mod m, Shoup style
            let q = ((v[i] as u128 * self.shoup[i] as u128) >> 64) as u64;
            let mut t = v[i]
                .wrapping_mul(self.crt_inv[i])
                .wrapping_sub(q.wrapping_mul(m));
            if t >= m {
                t -= m;
            }
            if t == 0 {
                continue;
            }
            frac += t as f64 * self.inv_m[i];
            mul_add_word(&mut acc, &self.cof_mod[i], t);
        }
        let alpha = frac.round() as u64;
        if alpha != 0 {
            mul_add_word(&mut acc, &self.neg_m_mod, alpha);
        }
        let n = &self.modulus.inner.n;
        let n0inv = self.modulus.inner.n0inv;
        for i in 0..big {
            let q = acc[i].wrapping_mul(n0inv) as u128;
            let mut carry = 0u64;
            for (j, &nj) in n.iter().enumerate() {
                let s = acc[i + j] as u128 + q * nj as u128 + carry as u128;
                acc[i + j] = s as u64;
                carry = (s >> 64) as u64;
            }
            let mut p = i + l;
            while carry != 0 {
                let (s, c) = acc[p].overflowing_add(carry);
                acc[p] = s;
                carry = c as u64;
                p += 1;
            }
        }
        // the quotient is at most ℓ
        let out = &mut acc[big..big + l + 1];
        if out[l] != 0 || !limbs::lt(&out[..l], n) {
            limbs::sub_assign(&mut out[..l], n);
        }
        Residue::from_limbs(SmallVec::from_slice(&out[..l]))
    }

    /// Signed integer in `(-M/2, M/2]` represented by `v`.
    pub fn to_signed_integer(&self, v: &RnsValue) -> BigInt {
        let x = limbs_to_biguint(&self.crt_unsigned(&v.limbs));
        if x > (&self.product >> 1u32) {
            BigInt::from_biguint(Sign::Minus, &self.product - x)
        } else {
            BigInt::from_biguint(Sign::Plus, x)
        }
    }
}

/// Limb-wise running sum for one row.
///
/// Positive and negative terms go into separate 128-bit sums per limb and
/// are reduced once, when the row is finished. Each term is below
/// `c_max · 2^62`, so with `γ_max · c_max < 2^64` no sum can overflow; for
/// larger bounds every term is reduced on arrival instead.
pub struct RnsAccumulator<'a> {
    ctx: &'a RnsContext,
    pos: [u128; MAX_RNS_MODULI],
    neg: [u128; MAX_RNS_MODULI],
    lazy: bool,
}

impl<'a> RnsAccumulator<'a> {
    pub fn new(ctx: &'a RnsContext) -> Self {
        RnsAccumulator {
            ctx,
            pos: [0; MAX_RNS_MODULI],
            neg: [0; MAX_RNS_MODULI],
            lazy: ctx.lazy_sums(),
        }
    }

    pub fn reset(&mut self) {
        let k = self.ctx.len();
        self.pos[..k].iter_mut().for_each(|a| *a = 0);
        self.neg[..k].iter_mut().for_each(|a| *a = 0);
    }

    #[inline]
    fn settle(&mut self) {
        if !self.lazy {
            for (i, &m) in self.ctx.moduli.iter().enumerate() {
                self.pos[i] %= m as u128;
                self.neg[i] %= m as u128;
            }
        }
    }

    #[inline]
    pub fn add(&mut self, x: &[u64]) {
        let k = self.ctx.len();
        for (a, &v) in self.pos[..k].iter_mut().zip(x) {
            *a += v as u128;
        }
        self.settle();
    }

    #[inline]
    pub fn sub(&mut self, x: &[u64]) {
        let k = self.ctx.len();
        for (a, &v) in self.neg[..k].iter_mut().zip(x) {
            *a += v as u128;
        }
        self.settle();
    }

    #[inline]
    pub fn mul_small(&mut self, c: i64, x: &[u64]) {
        let k = self.ctx.len();
        let mag = c.unsigned_abs() as u128;
        let side = if c > 0 { &mut self.pos } else { &mut self.neg };
        for (a, &v) in side[..k].iter_mut().zip(x) {
            *a += mag * v as u128;
        }
        self.settle();
    }

    /// Adds an already reduced residue (the product of a full coefficient).
    #[inline]
    pub fn add_residue(&mut self, r: &Residue) {
        let k = self.ctx.len();
        let mut limbs = [0u64; MAX_RNS_MODULI];
        self.ctx.to_rns_into(r, &mut limbs[..k]);
        self.add(&limbs[..k]);
    }

    fn reduced(&self) -> [u64; MAX_RNS_MODULI] {
        let mut out = [0u64; MAX_RNS_MODULI];
        for (i, &m) in self.ctx.moduli.iter().enumerate() {
            let m = m as u128;
            out[i] = ((self.pos[i] % m + m - self.neg[i] % m) % m) as u64;
        }
        out
    }

    pub fn value(&self) -> RnsValue {
        RnsValue {
            limbs: self.reduced()[..self.ctx.len()].iter().copied().collect(),
        }
    }

    /// Reconstruction modulo ℓ.
    pub fn finish(&self) -> Residue {
        self.ctx.from_rns_limbs(&self.reduced()[..self.ctx.len()])
    }
}

/// `Σ coeffs[t] · inputs[t]` computed limb-wise.
///
/// ±1 terms are additions/subtractions, small terms one word product per
/// limb. A full coefficient is multiplied modulo ℓ against the reconstructed
/// input and the reduced product is added back in RNS form.
///
/// The number of terms and each small coefficient are checked against the
/// context's γ_max and c_max. Debug builds additionally track the exact
/// signed sum and fail if it leaves the capacity bound.
pub fn rns_dot_accumulate(
    coeffs: &[Coefficient],
    inputs: &[RnsValue],
    ctx: &RnsContext,
) -> Result<RnsValue, ArithError> {
    if coeffs.len() != inputs.len() {
        return Err(ArithError::LengthMismatch {
            expected: coeffs.len(),
            got: inputs.len(),
        });
    }
    if coeffs.len() > ctx.gamma_max {
        return Err(ArithError::ContractViolation(format!(
            "{} terms exceed γ_max = {}",
            coeffs.len(),
            ctx.gamma_max
        )));
    }
    let modulus = ctx.modulus();
    let mut shadow = BigInt::zero();
    let mut acc = RnsAccumulator::new(ctx);
    for (c, x) in coeffs.iter().zip(inputs) {
        if x.limbs.len() != ctx.len() {
            return Err(ArithError::LengthMismatch {
                expected: ctx.len(),
                got: x.limbs.len(),
            });
        }
        match c {
            Coefficient::PlusOne => acc.add(&x.limbs),
            Coefficient::MinusOne => acc.sub(&x.limbs),
            Coefficient::Small(v) => {
                if v.unsigned_abs() as u64 > ctx.c_max {
                    return Err(ArithError::ContractViolation(format!(
                        "coefficient {v} exceeds c_max = {}",
                        ctx.c_max
                    )));
                }
                acc.mul_small(*v as i64, &x.limbs)
            }
            Coefficient::Full(f) => {
                let input = ctx.from_rns(x);
                acc.add_residue(&modulus.mul(f, &input));
            }
        }
        if cfg!(debug_assertions) {
            let term = match c {
                Coefficient::PlusOne => ctx.to_signed_integer(x),
                Coefficient::MinusOne => -ctx.to_signed_integer(x),
                Coefficient::Small(v) => ctx.to_signed_integer(x) * BigInt::from(*v),
                Coefficient::Full(f) => BigInt::from(modulus.mul(f, &ctx.from_rns(x)).to_biguint()),
            };
            shadow += term;
            if shadow.magnitude() > ctx.capacity_bound() {
                return Err(ArithError::ContractViolation(
                    "partial sum left the capacity bound".into(),
                ));
            }
        }
    }
    Ok(acc.value())
}

/// `acc += t·c`, carrying as far as needed.
#[inline]
fn mul_add_word(acc: &mut [u64], c: &[u64], t: u64) {
    let mut carry = 0u64;
    for (a, &cj) in acc.iter_mut().zip(c) {
        let s = *a as u128 + t as u128 * cj as u128 + carry as u128;
        *a = s as u64;
        carry = (s >> 64) as u64;
    }
    let mut p = c.len();
    while carry != 0 {
        let (s, o) = acc[p].overflowing_add(carry);
        acc[p] = s;
        carry = o as u64;
        p += 1;
    }
}

fn inv_mod_u64(a: u64, m: u64) -> u64 {
    // extended Euclid over i128
    let (mut r0, mut r1) = (m as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1);
    t0.rem_euclid(m as i128) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx200(seed: u64) -> (PrimeModulus, RnsContext) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = PrimeModulus::random(&mut rng, 200).unwrap();
        let ctx = RnsContext::new(&m, 128, (1 << 31) - 1);
        (m, ctx)
    }

    #[test]
    fn moduli_cover_four_times_the_capacity() {
        let (_, ctx) = ctx200(1);
        assert!(ctx.product() > &(ctx.capacity_bound() << 2u32));
        // dropping the last modulus must not suffice
        let last = *ctx.moduli().last().unwrap();
        assert!((ctx.product() / last) <= (ctx.capacity_bound() << 2u32));
        for (i, a) in ctx.moduli().iter().enumerate() {
            for b in &ctx.moduli()[i + 1..] {
                assert_eq!(num_integer::gcd(*a, *b), 1);
            }
        }
    }

    #[test]
    fn zero_and_small_values() {
        let (m, ctx) = ctx200(2);
        assert!(ctx.to_rns(&m.zero()).limbs.iter().all(|&l| l == 0));
        let v = ctx.to_rns(&m.from_u64(12345));
        assert!(v.limbs.iter().all(|&l| l == 12345));
        assert_eq!(ctx.from_rns(&ctx.zero()), m.zero());
        assert_eq!(ctx.from_rns(&ctx.to_rns(&m.one())), m.one());
    }

    #[test]
    fn exhaustive_round_trip_small_modulus() {
        let m = PrimeModulus::from_prime_u64(65521).unwrap();
        let ctx = RnsContext::new(&m, 4, 3);
        for a in 0..65521u64 {
            let r = m.from_u64(a);
            assert_eq!(ctx.from_rns(&ctx.to_rns(&r)), r);
        }
    }

    #[test]
    fn reconstruction_of_bounded_integers() {
        let (m, ctx) = ctx200(3);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let bound_bits = ctx.capacity_bound().bits();
        for _ in 0..200 {
            let x =
                super::super::prime::random_biguint(&mut rng, bound_bits) % ctx.capacity_bound();
            let limbs: SmallVec<[u64; 8]> = ctx
                .moduli()
                .iter()
                .map(|&p| (&x % p).to_u64_digits().first().copied().unwrap_or(0))
                .collect();
            let v = RnsValue { limbs };
            assert_eq!(ctx.from_rns(&v).to_biguint(), &x % m.ell());
        }
    }

    #[test]
    fn dot_accumulate_matches_canonical() {
        let (m, ctx) = ctx200(4);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let coeffs: Vec<Coefficient> = (0..100)
                .map(|_| match rng.gen_range(0..4) {
                    0 => Coefficient::PlusOne,
                    1 => Coefficient::MinusOne,
                    2 => {
                        let v = rng.gen_range(2..1000i32);
                        Coefficient::Small(if rng.gen() { v } else { -v })
                    }
                    _ => Coefficient::Full(m.random_residue(&mut rng)),
                })
                .collect();
            let xs: Vec<Residue> = (0..100).map(|_| m.random_residue(&mut rng)).collect();
            let inputs: Vec<RnsValue> = xs.iter().map(|x| ctx.to_rns(x)).collect();
            let got = ctx.from_rns(&rns_dot_accumulate(&coeffs, &inputs, &ctx).unwrap());
            let mut expect = m.zero();
            for (c, x) in coeffs.iter().zip(&xs) {
                expect = m.add(&expect, &m.mul(&c.value(&m), x));
            }
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn empty_and_identity_rows() {
        let (m, ctx) = ctx200(5);
        let v = rns_dot_accumulate(&[], &[], &ctx).unwrap();
        assert_eq!(v, ctx.zero());
        let x = ctx.to_rns(&m.from_u64(99));
        let v =
            rns_dot_accumulate(&[Coefficient::PlusOne], std::slice::from_ref(&x), &ctx).unwrap();
        assert_eq!(v, x);
    }

    #[test]
    fn contract_violations_detected() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let ctx = RnsContext::new(&m, 2, 10);
        let x = ctx.to_rns(&m.from_u64(5));
        let three = vec![Coefficient::PlusOne; 3];
        assert!(matches!(
            rns_dot_accumulate(&three, &vec![x.clone(); 3], &ctx),
            Err(ArithError::ContractViolation(_))
        ));
        assert!(matches!(
            rns_dot_accumulate(&[Coefficient::Small(11)], std::slice::from_ref(&x), &ctx),
            Err(ArithError::ContractViolation(_))
        ));
        if cfg!(debug_assertions) {
            // an input far outside [0, ℓ) overflows the bound
            let huge = RnsValue {
                limbs: ctx.moduli().iter().map(|&p| p / 3).collect(),
            };
            assert!(matches!(
                rns_dot_accumulate(&[Coefficient::Small(10)], &[huge], &ctx),
                Err(ArithError::ContractViolation(_))
            ));
        }
    }
}
