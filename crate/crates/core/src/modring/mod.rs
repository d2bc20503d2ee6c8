//! Exact arithmetic in Z/ℓZ for a large prime ℓ.
//!
//! Residues are stored as fixed-width little-endian limb vectors, one limb
//! count per modulus. Products go through Montgomery multiplication; the
//! public API only ever exposes canonical representatives in `[0, ℓ)`.
//! Hot loops that keep one operand fixed (dot products, Lingen) may hold it
//! in Montgomery form via [`PrimeModulus::to_mont`] and use
//! [`PrimeModulus::mul_mont_plain`], which yields a canonical product.

mod limbs;
pub mod prime;
pub mod rns;

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use smallvec::SmallVec;

use crate::error::ArithError;
pub use limbs::MAX_LIMBS;
pub use rns::{rns_dot_accumulate, RnsAccumulator, RnsContext, RnsValue};

pub(crate) type Limbs = SmallVec<[u64; 4]>;

/// Canonical element of Z/ℓZ.
///
/// The limb count is fixed by the modulus; two residues of the same modulus
/// compare equal iff they represent the same class.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Residue {
    limbs: Limbs,
}

impl Residue {
    pub(crate) fn from_limbs(limbs: Limbs) -> Self {
        Residue { limbs }
    }

    pub fn limbs(&self) -> &[u64] {
        &self.limbs
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    pub fn to_biguint(&self) -> BigUint {
        prime::limbs_to_biguint(&self.limbs)
    }

    /// Low 64 bits of the representative.
    pub fn low_u64(&self) -> u64 {
        self.limbs[0]
    }
}

impl fmt::Debug for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Residue({})", self.to_biguint())
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_biguint())
    }
}

/// Binary operation selector for [`PrimeModulus::residue_arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

struct ModulusInner {
    ell: BigUint,
    bits: u64,
    n: Limbs,
    n0inv: u64,
    /// R^2 mod ℓ with R = 2^{64 l}.
    r2: Limbs,
    /// R mod ℓ, the Montgomery form of 1.
    r1: Limbs,
}

/// An odd prime modulus ℓ of 2..=1024 bits with precomputed Montgomery data.
///
/// Cloning is cheap (shared).
#[derive(Clone)]
pub struct PrimeModulus {
    inner: Arc<ModulusInner>,
}

impl fmt::Debug for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PrimeModulus({} bits: {})",
            self.inner.bits, self.inner.ell
        )
    }
}

impl PartialEq for PrimeModulus {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.ell == other.inner.ell
    }
}

impl Eq for PrimeModulus {}

impl PrimeModulus {
    /// Validates `ell` (odd, probable prime, 2..=1024 bits) and precomputes
    /// the Montgomery constants.
    pub fn new(ell: BigUint) -> Result<Self, ArithError> {
        let bits = ell.bits();
        if !(2..=1024).contains(&bits) {
            return Err(ArithError::InvalidModulus(format!("{bits} bits")));
        }
        if !ell.bit(0) {
            return Err(ArithError::InvalidModulus(format!("{ell} is even")));
        }
        if !prime::is_probable_prime(&ell) {
            return Err(ArithError::InvalidModulus(format!("{ell} is composite")));
        }
        Ok(Self::new_unchecked(ell))
    }

    pub(crate) fn new_unchecked(ell: BigUint) -> Self {
        let bits = ell.bits();
        let l = bits.div_ceil(64) as usize;
        let n = to_limbs(&ell, l);
        let n0inv = limbs::mont_n0inv(n[0]);
        let r = BigUint::one() << (64 * l);
        let r1 = to_limbs(&(&r % &ell), l);
        let r2 = to_limbs(&(&r * &r % &ell), l);
        PrimeModulus {
            inner: Arc::new(ModulusInner {
                ell,
                bits,
                n,
                n0inv,
                r2,
                r1,
            }),
        }
    }

    pub fn from_prime_u64(ell: u64) -> Result<Self, ArithError> {
        Self::new(BigUint::from(ell))
    }

    /// Parses a hexadecimal modulus (optional `0x` prefix).
    pub fn from_hex(hex: &str) -> Result<Self, ArithError> {
        let digits = hex.trim().trim_start_matches("0x").trim_start_matches("0X");
        let ell = BigUint::parse_bytes(digits.as_bytes(), 16)
            .ok_or_else(|| ArithError::InvalidModulus(format!("not hexadecimal: {hex}")))?;
        Self::new(ell)
    }

    /// Random probable prime of exactly `bits` bits.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> Result<Self, ArithError> {
        if !(3..=1024).contains(&bits) {
            return Err(ArithError::InvalidModulus(format!("{bits} bits")));
        }
        Ok(Self::new_unchecked(prime::random_prime(rng, bits)))
    }

    pub fn ell(&self) -> &BigUint {
        &self.inner.ell
    }

    pub fn bit_length(&self) -> u64 {
        self.inner.bits
    }

    /// Number of 64-bit limbs per residue.
    pub fn limb_count(&self) -> usize {
        self.inner.n.len()
    }

    /// Serialized width of one residue: ceil(bit_length / 8) bytes.
    pub fn residue_bytes(&self) -> usize {
        self.inner.bits.div_ceil(8) as usize
    }

    pub fn zero(&self) -> Residue {
        Residue::from_limbs(SmallVec::from_elem(0, self.limb_count()))
    }

    pub fn one(&self) -> Residue {
        self.from_u64(1)
    }

    pub fn from_u64(&self, v: u64) -> Residue {
        let l = self.limb_count();
        let mut limbs: Limbs = SmallVec::from_elem(0, l);
        limbs[0] = v;
        self.reduce_wide(&limbs)
    }

    pub fn from_i64(&self, v: i64) -> Residue {
        let r = self.from_u64(v.unsigned_abs());
        if v < 0 {
            self.neg(&r)
        } else {
            r
        }
    }

    /// Reduces an arbitrary non-negative integer.
    pub fn from_biguint(&self, v: &BigUint) -> Residue {
        let reduced = v % &self.inner.ell;
        Residue::from_limbs(to_limbs(&reduced, self.limb_count()))
    }

    /// Accepts `v` only when it is already canonical.
    pub fn try_residue(&self, v: &BigUint) -> Result<Residue, ArithError> {
        if v >= &self.inner.ell {
            return Err(ArithError::ModulusMismatch);
        }
        Ok(Residue::from_limbs(to_limbs(v, self.limb_count())))
    }

    /// Whether `a` is a canonical representative for this modulus.
    pub fn is_canonical(&self, a: &Residue) -> bool {
        a.limbs.len() == self.limb_count() && limbs::lt(&a.limbs, &self.inner.n)
    }

    /// Uniform random residue.
    pub fn random_residue<R: Rng + ?Sized>(&self, rng: &mut R) -> Residue {
        let l = self.limb_count();
        let top_bits = self.inner.bits - 64 * (l as u64 - 1);
        let mask = if top_bits == 64 {
            u64::MAX
        } else {
            (1u64 << top_bits) - 1
        };
        loop {
            let mut limbs: Limbs = (0..l).map(|_| rng.gen::<u64>()).collect();
            limbs[l - 1] &= mask;
            if limbs::lt(&limbs, &self.inner.n) {
                return Residue::from_limbs(limbs);
            }
        }
    }

    /// Uniform random non-zero residue.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> Residue {
        loop {
            let r = self.random_residue(rng);
            if !r.is_zero() {
                return r;
            }
        }
    }

    pub fn add(&self, a: &Residue, b: &Residue) -> Residue {
        let mut out = self.zero();
        limbs::add_mod(&a.limbs, &b.limbs, &self.inner.n, &mut out.limbs);
        out
    }

    pub fn add_assign(&self, a: &mut Residue, b: &Residue) {
        let carry = limbs::add_assign(&mut a.limbs, &b.limbs);
        if carry || !limbs::lt(&a.limbs, &self.inner.n) {
            limbs::sub_assign(&mut a.limbs, &self.inner.n);
        }
    }

    pub fn sub(&self, a: &Residue, b: &Residue) -> Residue {
        let mut out = self.zero();
        limbs::sub_mod(&a.limbs, &b.limbs, &self.inner.n, &mut out.limbs);
        out
    }

    pub fn neg(&self, a: &Residue) -> Residue {
        if a.is_zero() {
            return a.clone();
        }
        let mut out = Residue::from_limbs(self.inner.n.clone());
        limbs::sub_assign(&mut out.limbs, &a.limbs);
        out
    }

    /// Canonical product `a·b mod ℓ`.
    pub fn mul(&self, a: &Residue, b: &Residue) -> Residue {
        let mut t = self.zero();
        let inner = &*self.inner;
        limbs::mont_mul(&a.limbs, &b.limbs, &inner.n, inner.n0inv, &mut t.limbs);
        let mut out = self.zero();
        limbs::mont_mul(&t.limbs, &inner.r2, &inner.n, inner.n0inv, &mut out.limbs);
        out
    }

    /// Montgomery form `a·R mod ℓ`.
    pub fn to_mont(&self, a: &Residue) -> Residue {
        let inner = &*self.inner;
        let mut out = self.zero();
        limbs::mont_mul(&a.limbs, &inner.r2, &inner.n, inner.n0inv, &mut out.limbs);
        out
    }

    /// Inverse of [`PrimeModulus::to_mont`].
    pub fn from_mont(&self, a: &Residue) -> Residue {
        let inner = &*self.inner;
        let mut one: Limbs = SmallVec::from_elem(0, self.limb_count());
        one[0] = 1;
        let mut out = self.zero();
        limbs::mont_mul(&a.limbs, &one, &inner.n, inner.n0inv, &mut out.limbs);
        out
    }

    /// Raw Montgomery product `a·b·R⁻¹`.
    ///
    /// With `a_mont = to_mont(a)` and `b` canonical this is the canonical
    /// product `a·b`; with both in Montgomery form it stays in Montgomery form.
    #[inline]
    pub fn mul_mont_plain(&self, a_mont: &Residue, b: &Residue) -> Residue {
        let inner = &*self.inner;
        let mut out = self.zero();
        limbs::mont_mul(
            &a_mont.limbs,
            &b.limbs,
            &inner.n,
            inner.n0inv,
            &mut out.limbs,
        );
        out
    }

    /// Montgomery form of one.
    pub fn mont_one(&self) -> Residue {
        Residue::from_limbs(self.inner.r1.clone())
    }

    /// `a^e mod ℓ`.
    pub fn pow(&self, a: &Residue, e: &BigUint) -> Residue {
        let base = self.to_mont(a);
        let mut acc = self.mont_one();
        for i in (0..e.bits()).rev() {
            acc = self.mul_mont_plain(&acc, &acc);
            if e.bit(i) {
                acc = self.mul_mont_plain(&acc, &base);
            }
        }
        self.from_mont(&acc)
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: &Residue) -> Result<Residue, ArithError> {
        if a.is_zero() {
            return Err(ArithError::NotInvertible);
        }
        let e = &self.inner.ell - 2u32;
        Ok(self.pow(a, &e))
    }

    /// Checked binary operation; rejects operands that are not canonical
    /// residues of this modulus.
    pub fn residue_arith(
        &self,
        a: &Residue,
        b: &Residue,
        op: ArithOp,
    ) -> Result<Residue, ArithError> {
        if !self.is_canonical(a) || !self.is_canonical(b) {
            return Err(ArithError::ModulusMismatch);
        }
        Ok(match op {
            ArithOp::Add => self.add(a, b),
            ArithOp::Sub => self.sub(a, b),
            ArithOp::Mul => self.mul(a, b),
        })
    }

    /// Checked inverse.
    pub fn residue_inverse(&self, a: &Residue) -> Result<Residue, ArithError> {
        if !self.is_canonical(a) {
            return Err(ArithError::ModulusMismatch);
        }
        self.inv(a)
    }

    /// Reduces a little-endian multi-limb integer of any length.
    pub fn reduce_wide(&self, x: &[u64]) -> Residue {
        let inner = &*self.inner;
        let l = self.limb_count();
        let len = x.iter().rposition(|&v| v != 0).map_or(0, |p| p + 1);
        let x = &x[..len];
        if x.len() <= l {
            let mut limbs: Limbs = SmallVec::from_elem(0, l);
            limbs[..x.len()].copy_from_slice(x);
            if limbs::lt(&limbs, &inner.n) {
                return Residue::from_limbs(limbs);
            }
        }
        let mut one: Limbs = SmallVec::from_elem(0, l);
        one[0] = 1;
        let mut acc = self.zero();
        let mut chunk: Limbs = SmallVec::from_elem(0, l);
        let mut tmp = self.zero();
        let nchunks = x.len().div_ceil(l);
        for c in (0..nchunks).rev() {
            let src = &x[c * l..((c + 1) * l).min(x.len())];
            chunk.iter_mut().for_each(|v| *v = 0);
            chunk[..src.len()].copy_from_slice(src);
            // acc·R mod ℓ
            limbs::mont_mul(&acc.limbs, &inner.r2, &inner.n, inner.n0inv, &mut tmp.limbs);
            std::mem::swap(&mut acc, &mut tmp);
            // chunk mod ℓ, valid for any chunk < R
            limbs::mont_mul(&chunk, &inner.r2, &inner.n, inner.n0inv, &mut tmp.limbs);
            let mut red = self.zero();
            limbs::mont_mul(&tmp.limbs, &one, &inner.n, inner.n0inv, &mut red.limbs);
            acc = self.add(&acc, &red);
        }
        acc
    }

    /// Fixed-width little-endian serialization.
    pub fn write_residue(&self, a: &Residue, out: &mut Vec<u8>) {
        let width = self.residue_bytes();
        let start = out.len();
        for l in a.limbs.iter() {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.truncate(start + width);
    }

    /// Parses one fixed-width residue; rejects non-canonical values.
    pub fn read_residue(&self, bytes: &[u8]) -> Result<Residue, ArithError> {
        let width = self.residue_bytes();
        if bytes.len() != width {
            return Err(ArithError::LengthMismatch {
                expected: width,
                got: bytes.len(),
            });
        }
        let l = self.limb_count();
        let mut limbs: Limbs = SmallVec::from_elem(0, l);
        for (i, b) in bytes.iter().enumerate() {
            limbs[i / 8] |= (*b as u64) << (8 * (i % 8));
        }
        if !limbs::lt(&limbs, &self.inner.n) {
            return Err(ArithError::ModulusMismatch);
        }
        Ok(Residue::from_limbs(limbs))
    }

    /// Big-endian bytes of ℓ padded to the residue width.
    pub fn ell_be_bytes(&self) -> Vec<u8> {
        let raw = self.inner.ell.to_bytes_be();
        let mut out = vec![0u8; self.residue_bytes() - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    /// Dot product `Σ a_i·b_i` with `a` in Montgomery form and `b` canonical.
    pub fn dot_mont_plain(&self, a_mont: &[Residue], b: &[Residue]) -> Residue {
        let mut acc = self.zero();
        for (x, y) in a_mont.iter().zip(b) {
            let p = self.mul_mont_plain(x, y);
            self.add_assign(&mut acc, &p);
        }
        acc
    }

    /// Signed value of least magnitude congruent to `v`, if that magnitude is
    /// at most `bound`.
    pub fn as_small(&self, v: &Residue, bound: u64) -> Option<i64> {
        let bound = bound.min(i64::MAX as u64);
        let word = |r: &Residue| (r.limbs[1..].iter().all(|&l| l == 0)).then_some(r.limbs[0]);
        let pos = word(v);
        let neg = word(&self.neg(v));
        match (pos, neg) {
            (Some(p), Some(n)) if n < p => (n <= bound).then(|| -(n as i64)),
            (Some(p), _) => (p <= bound).then_some(p as i64),
            (None, Some(n)) => (n <= bound).then(|| -(n as i64)),
            (None, None) => None,
        }
    }
}

pub(crate) fn to_limbs(v: &BigUint, l: usize) -> Limbs {
    let mut limbs: Limbs = v.to_u64_digits().into_iter().collect();
    limbs.resize(l, 0);
    limbs
}

impl Default for Residue {
    fn default() -> Self {
        Residue {
            limbs: SmallVec::from_elem(0, 1),
        }
    }
}
