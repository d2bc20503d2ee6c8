//! Oracles shared by the integration tests. Everything here works on plain
//! big integers, independent of the crate's Montgomery arithmetic.

#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::{PrimeModulus, Residue};
use sldlag::spmatrix::{MatrixBuilder, SparseMatrix};

pub fn big(r: &Residue) -> BigUint {
    r.to_biguint()
}

pub fn bigs(v: &[Residue]) -> Vec<BigUint> {
    v.iter().map(big).collect()
}

/// Entries of `a` as big integers, dense columns included.
pub fn dense_big(a: &SparseMatrix) -> Vec<Vec<BigUint>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| big(&a.get(i, j))).collect())
        .collect()
}

pub fn mat_vec(p: &BigUint, a: &[Vec<BigUint>], u: &[BigUint]) -> Vec<BigUint> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(u)
                .fold(BigUint::zero(), |acc, (x, y)| (acc + x * y) % p)
        })
        .collect()
}

pub fn dot(p: &BigUint, a: &[BigUint], b: &[BigUint]) -> BigUint {
    a.iter()
        .zip(b)
        .fold(BigUint::zero(), |acc, (x, y)| (acc + x * y) % p)
}

/// `A·w = 0` computed with big integers.
pub fn is_kernel(a: &SparseMatrix, w: &[Residue]) -> bool {
    let p = a.modulus().ell().clone();
    let wb = bigs(w);
    (0..a.nrows()).all(|i| {
        let mut acc = BigUint::zero();
        for (j, v) in a.row_values(i) {
            acc += big(&v) * &wb[j];
        }
        (acc % &p).is_zero()
    })
}

pub fn is_nonzero(w: &[Residue]) -> bool {
    w.iter().any(|x| !x.is_zero())
}

fn inv(p: &BigUint, a: &BigUint) -> BigUint {
    a.modpow(&(p - 2u32), p)
}

/// Rank modulo `p` by Gaussian elimination.
pub fn rank(p: &BigUint, rows: &[Vec<BigUint>]) -> usize {
    let mut m: Vec<Vec<BigUint>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x % p).collect())
        .collect();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..ncols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let iv = inv(p, &m[r][c]);
        for x in m[r].iter_mut() {
            *x = (&*x * &iv) % p;
        }
        let pr = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&pr) {
                    *x = (&*x + p - (&f * y) % p) % p;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// One non-zero kernel vector of the dense matrix, if any.
pub fn dense_kernel_vector(
    p: &BigUint,
    rows: &[Vec<BigUint>],
    ncols: usize,
) -> Option<Vec<BigUint>> {
    let mut m: Vec<Vec<BigUint>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x % p).collect())
        .collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let iv = inv(p, &m[r][c]);
        for x in m[r].iter_mut() {
            *x = (&*x * &iv) % p;
        }
        let pr = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&pr) {
                    *x = (&*x + p - (&f * y) % p) % p;
                }
            }
        }
        pivots.push((r, c));
        r += 1;
    }
    let free = (0..ncols).find(|c| !pivots.iter().any(|(_, pc)| pc == c))?;
    let mut w = vec![BigUint::zero(); ncols];
    w[free] = BigUint::one();
    for &(row, pc) in &pivots {
        w[pc] = (p - &m[row][free]) % p;
    }
    Some(w)
}

/// Random square matrix with small coefficients, some of them ±1.
pub fn random_sparse(
    m: &PrimeModulus,
    n: usize,
    per_row: usize,
    rng: &mut ChaCha8Rng,
) -> SparseMatrix {
    let mut b = MatrixBuilder::new(m, n);
    for _ in 0..n {
        let row: Vec<(usize, i64)> = (0..per_row)
            .map(|_| (rng.gen_range(0..n), rng.gen_range(-50i64..=50)))
            .collect();
        b.push_small(&row).expect("valid row");
    }
    b.build().expect("valid matrix")
}

/// Random square matrix with some full-width coefficients too.
pub fn random_mixed(
    m: &PrimeModulus,
    n: usize,
    per_row: usize,
    rng: &mut ChaCha8Rng,
) -> SparseMatrix {
    let mut b = MatrixBuilder::new(m, n);
    for _ in 0..n {
        let row: Vec<(usize, Residue)> = (0..per_row)
            .map(|_| {
                let c = rng.gen_range(0..n);
                let v = match rng.gen_range(0..4) {
                    0 => m.one(),
                    1 => m.from_i64(-1),
                    2 => m.from_i64(rng.gen_range(-1000..=1000)),
                    _ => m.random_residue(rng),
                };
                (c, v)
            })
            .collect();
        b.push_values(row).expect("valid row");
    }
    b.build().expect("valid matrix")
}

pub fn random_vec(m: &PrimeModulus, n: usize, rng: &mut ChaCha8Rng) -> Vec<Residue> {
    (0..n).map(|_| m.random_residue(rng)).collect()
}

pub fn modulus_bits(bits: u64, seed: u64) -> PrimeModulus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PrimeModulus::random(&mut rng, bits).expect("prime")
}

/// Corpus matrix light enough for elimination to fire.
pub fn sparse_corpus(m: &PrimeModulus, n: usize, seed: u64) -> SparseMatrix {
    let profile = profile_ffs()
        .with_n(n)
        .with_gamma(6)
        .with_density_decay(1.0)
        .with_seed(seed);
    generate(&profile, m).expect("valid profile")
}

/// Scalar sequence `a_i = ᵀx·Aⁱ·y` by dense big-integer powers.
pub fn dense_krylov(
    p: &BigUint,
    a: &[Vec<BigUint>],
    x: &[BigUint],
    y: &[BigUint],
    count: usize,
) -> Vec<BigUint> {
    let mut v = y.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(dot(p, x, &v));
        v = mat_vec(p, a, &v);
    }
    out
}

/// Rank of the `k×k` Hankel matrix `(a_{i+j})`.
pub fn hankel_rank(p: &BigUint, seq: &[BigUint], k: usize) -> usize {
    let rows: Vec<Vec<BigUint>> = (0..k)
        .map(|i| (0..k).map(|j| seq[i + j].clone()).collect())
        .collect();
    rank(p, &rows)
}
