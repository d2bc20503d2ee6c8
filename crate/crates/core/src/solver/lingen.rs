//! Block linear generators by an iterative σ-basis.
//!
//! With `S(X) = Σ a_k X^k` (m×n), the basis spans the solutions `(u, v)` of
//! `S·u ≡ v (mod X^L)` and is kept minimal for the shifted degree
//! `max(deg u, deg v + 1)`. A column of shifted degree `d` yields the vector
//! polynomial `F(X) = X^d·u(1/X)`, and `deg v < d` is exactly the statement
//! that `Σ_i a_{k+i}·f_i = 0` for `k + d < L`.
//!
//! The residual `S·u − v` is carried along with the basis, so each step
//! only reads one coefficient; total cost is quadratic in `L`.

use super::BlockSequence;
use crate::error::SolverError;
use crate::modring::{PrimeModulus, Residue};

/// A vector polynomial `F = (F^(0), …, F^(n−1))`, low degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generators {
    /// `n` coefficient lists, each of length `degree + 1`.
    pub polys: Vec<Vec<Residue>>,
    /// Declared degree; the annihilation window is `L − degree` terms long.
    pub degree: usize,
}

impl Generators {
    pub fn n(&self) -> usize {
        self.polys.len()
    }

    /// `f_i` as an `n`-vector.
    pub fn coefficient(&self, i: usize) -> Vec<Residue> {
        self.polys.iter().map(|p| p[i].clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.polys.iter().all(|p| p.iter().all(|c| c.is_zero()))
    }

    /// Largest `s` with `X^s` dividing every component.
    pub fn valuation(&self) -> usize {
        (0..=self.degree)
            .find(|&i| self.polys.iter().any(|p| !p[i].is_zero()))
            .unwrap_or(self.degree + 1)
    }

    /// Highest index with a non-zero coefficient.
    pub fn effective_degree(&self) -> usize {
        (0..=self.degree)
            .rev()
            .find(|&i| self.polys.iter().any(|p| !p[i].is_zero()))
            .unwrap_or(0)
    }

    /// Checks `Σ_i a_{k+i}·f_i = 0` for every `k` with `k + degree < L`.
    pub fn annihilates(&self, m: &PrimeModulus, seq: &BlockSequence) -> bool {
        let len = seq.terms.len();
        if len <= self.degree {
            return true;
        }
        let f: Vec<Vec<Residue>> = (0..=self.degree).map(|i| self.coefficient(i)).collect();
        (0..len - self.degree).all(|k| {
            (0..seq.m).all(|r| {
                let mut acc = m.zero();
                for (i, fi) in f.iter().enumerate() {
                    let t = &seq.terms[k + i];
                    for (j, fij) in fi.iter().enumerate() {
                        if !fij.is_zero() {
                            m.add_assign(&mut acc, &m.mul(&t[r * seq.n + j], fij));
                        }
                    }
                }
                acc.is_zero()
            })
        })
    }

    /// Scales so the highest non-zero coefficient of the first component
    /// that reaches it is 1.
    fn normalize(&mut self, m: &PrimeModulus) {
        let top = self.effective_degree();
        let Some(lead) = self
            .polys
            .iter()
            .map(|p| &p[top])
            .find(|c| !c.is_zero())
            .cloned()
        else {
            return;
        };
        let inv = m.inv(&lead).expect("non-zero leading coefficient");
        for p in &mut self.polys {
            for c in p.iter_mut() {
                *c = m.mul(c, &inv);
            }
        }
    }
}

struct Column {
    /// Residual coefficients from `shift` on: entry `k` is at `(k − shift)·m`.
    resid: Vec<Residue>,
    shift: usize,
    /// Basis column, one `(n + m)`-vector per degree.
    poly: Vec<Vec<Residue>>,
    delta: usize,
}

impl Column {
    fn resid_at(&self, k: usize, m: usize) -> Option<&[Residue]> {
        (k >= self.shift).then(|| &self.resid[(k - self.shift) * m..(k - self.shift + 1) * m])
    }
}

/// Minimal basis after consuming every term of `seq`: `(u, shifted degree)`
/// for each of the `n + m` columns, `u` as a list of `n`-vectors.
fn sigma_basis(modulus: &PrimeModulus, seq: &BlockSequence) -> Vec<(Vec<Vec<Residue>>, usize)> {
    let (m, n) = (seq.m, seq.n);
    let w = n + m;
    let len = seq.terms.len();
    let zero = modulus.zero();
    let mut cols: Vec<Column> = (0..w)
        .map(|j| {
            let mut resid = vec![zero.clone(); len * m];
            if j < n {
                for (k, t) in seq.terms.iter().enumerate() {
                    for r in 0..m {
                        resid[k * m + r] = t[r * n + j].clone();
                    }
                }
            } else if len > 0 {
                resid[j - n] = modulus.neg(&modulus.one());
            }
            let mut e = vec![zero.clone(); w];
            e[j] = modulus.one();
            Column {
                resid,
                shift: 0,
                poly: vec![e],
                delta: usize::from(j >= n),
            }
        })
        .collect();

    for k in 0..len {
        let mut order: Vec<usize> = (0..w).collect();
        order.sort_by_key(|&j| (cols[j].delta, j));
        // (column, pivot row, inverse of the pivot entry)
        let mut pivots: Vec<(usize, usize, Residue)> = Vec::with_capacity(m);
        for &j in &order {
            for &(p, row, ref inv) in &pivots {
                let entry = cols[j].resid_at(k, m).expect("column started")[row].clone();
                if entry.is_zero() {
                    continue;
                }
                let factor = modulus.mul(&entry, inv);
                eliminate(modulus, &mut cols, j, p, &factor, k, (len, m));
            }
            let d = cols[j].resid_at(k, m).expect("column started");
            if let Some(row) = d.iter().position(|x| !x.is_zero()) {
                let inv = modulus.inv(&d[row]).expect("non-zero pivot");
                pivots.push((j, row, inv));
            }
        }
        for (p, _, _) in pivots {
            let c = &mut cols[p];
            c.shift += 1;
            c.resid.truncate((len - c.shift) * m);
            c.poly.insert(0, vec![zero.clone(); w]);
            c.delta += 1;
        }
    }

    cols.into_iter()
        .map(|c| {
            let u = c.poly.into_iter().map(|mut e| {
                e.truncate(n);
                e
            });
            (u.collect(), c.delta)
        })
        .collect()
}

/// Column `j` −= `factor`·column `p`, residual from `k` on and basis entries.
fn eliminate(
    m: &PrimeModulus,
    cols: &mut [Column],
    j: usize,
    p: usize,
    factor: &Residue,
    k: usize,
    (len, mr): (usize, usize),
) {
    let (cj, cp) = if j < p {
        let (a, b) = cols.split_at_mut(p);
        (&mut a[j], &b[0])
    } else {
        let (a, b) = cols.split_at_mut(j);
        (&mut b[0], &a[p])
    };
    let f = m.to_mont(factor);
    let rows = cp.poly[0].len();
    for kk in k..len {
        let src = &cp.resid[(kk - cp.shift) * mr..(kk - cp.shift + 1) * mr];
        let dst = &mut cj.resid[(kk - cj.shift) * mr..(kk - cj.shift + 1) * mr];
        for (d, s) in dst.iter_mut().zip(src) {
            if !s.is_zero() {
                *d = m.sub(d, &m.mul_mont_plain(&f, s));
            }
        }
    }
    if cj.poly.len() < cp.poly.len() {
        cj.poly.resize(cp.poly.len(), vec![m.zero(); rows]);
    }
    for (dst, src) in cj.poly.iter_mut().zip(&cp.poly) {
        for (d, s) in dst.iter_mut().zip(src) {
            if !s.is_zero() {
                *d = m.sub(d, &m.mul_mont_plain(&f, s));
            }
        }
    }
}

fn to_generators(modulus: &PrimeModulus, u: &[Vec<Residue>], delta: usize, n: usize) -> Generators {
    let polys = (0..n)
        .map(|row| {
            (0..=delta)
                .map(|i| {
                    u.get(delta - i)
                        .map_or_else(|| modulus.zero(), |e| e[row].clone())
                })
                .collect()
        })
        .collect();
    Generators {
        polys,
        degree: delta,
    }
}

/// Every generator of degree at most `⌈dim/n⌉` from the minimal basis,
/// lowest degree first.
pub fn lingen_candidates(
    modulus: &PrimeModulus,
    seq: &BlockSequence,
    dim: usize,
) -> Result<Vec<Generators>, SolverError> {
    let bound = dim.div_ceil(seq.n);
    let mut cols = sigma_basis(modulus, seq);
    cols.sort_by_key(|(_, d)| *d);
    let mut out: Vec<Generators> = cols
        .iter()
        .filter(|(_, d)| *d <= bound)
        .map(|(u, d)| to_generators(modulus, u, *d, seq.n))
        .filter(|g| !g.is_zero())
        .collect();
    if out.is_empty() {
        return Err(SolverError::GeneratorFailure);
    }
    for g in &mut out {
        g.normalize(modulus);
    }
    Ok(out)
}

/// Lowest-degree generator of `seq`.
pub fn block_lingen(
    modulus: &PrimeModulus,
    seq: &BlockSequence,
    dim: usize,
) -> Result<Generators, SolverError> {
    Ok(lingen_candidates(modulus, seq, dim)?.swap_remove(0))
}

/// Constant combinations of `gens` whose constant term vanishes, one per
/// basis vector of the kernel of the matrix of constant terms.
pub fn vanishing_combinations(m: &PrimeModulus, gens: &[Generators]) -> Vec<Generators> {
    let k = gens.len();
    if k == 0 {
        return Vec::new();
    }
    let n = gens[0].n();
    // Rows: components; columns: generators.
    let mut mat: Vec<Vec<Residue>> = (0..n)
        .map(|r| gens.iter().map(|g| g.polys[r][0].clone()).collect())
        .collect();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..k {
        let Some(p) = (row..n).find(|&r| !mat[r][col].is_zero()) else {
            continue;
        };
        mat.swap(row, p);
        let inv = m.inv(&mat[row][col]).expect("non-zero pivot");
        for x in mat[row].iter_mut() {
            *x = m.mul(x, &inv);
        }
        for r in 0..n {
            if r != row && !mat[r][col].is_zero() {
                let f = mat[r][col].clone();
                let pr = mat[row].clone();
                for (x, y) in mat[r].iter_mut().zip(&pr) {
                    *x = m.sub(x, &m.mul(&f, y));
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == n {
            break;
        }
    }
    let mut out = Vec::new();
    for free in (0..k).filter(|c| !pivot_cols.contains(c)) {
        let mut coef = vec![m.zero(); k];
        coef[free] = m.one();
        for (r, &pc) in pivot_cols.iter().enumerate() {
            coef[pc] = m.neg(&mat[r][free]);
        }
        let degree = gens
            .iter()
            .zip(&coef)
            .filter(|(_, c)| !c.is_zero())
            .map(|(g, _)| g.degree)
            .max()
            .unwrap_or(0);
        let mut polys = vec![vec![m.zero(); degree + 1]; n];
        for (g, c) in gens.iter().zip(&coef) {
            if c.is_zero() {
                continue;
            }
            for (dst, src) in polys.iter_mut().zip(&g.polys) {
                for (d, s) in dst.iter_mut().zip(src) {
                    m.add_assign(d, &m.mul(c, s));
                }
            }
        }
        let mut g = Generators { polys, degree };
        if !g.is_zero() {
            g.normalize(m);
            out.push(g);
        }
    }
    out
}
