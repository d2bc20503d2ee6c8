//! Synthetic sparse matrices shaped like index-calculus relation matrices.
//!
//! Column `j` of the sparse part is chosen with probability proportional to
//! `(j+1)^(-decay)`, so leading columns are dense and density falls off
//! slowly. Row weights stay close to `gamma`. Most coefficients are ±1, the
//! rest small integers in `±[2, 64]`. A few columns are then overwritten by
//! a random linear combination of two other columns, which plants kernel
//! vectors with three non-zeros each.
//!
//! Randomness comes from ChaCha8 seeded with the profile seed; weights are
//! computed with `libm::pow` so output is identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::ProfileError;
use crate::modring::{PrimeModulus, Residue};
use crate::spmatrix::{MatrixBuilder, SparseMatrix};

const SMALL_MAGNITUDE: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusProfile {
    pub n: usize,
    pub gamma: usize,
    pub pm1_fraction: f64,
    pub density_decay: f64,
    pub dense_cols: usize,
    pub planted_kernel_cols: usize,
    pub seed: u64,
}

/// Desk-scale default size for the presets.
pub const DEFAULT_N: usize = 100_000;

/// Function-field-like preset: weight 100, 90% ±1, no dense columns.
pub fn profile_ffs() -> CorpusProfile {
    CorpusProfile {
        n: DEFAULT_N,
        gamma: 100,
        pm1_fraction: 0.90,
        density_decay: 0.5,
        dense_cols: 0,
        planted_kernel_cols: 1,
        seed: 0,
    }
}

/// Number-field-like preset: weight 150 and 5 dense columns.
pub fn profile_nfs() -> CorpusProfile {
    CorpusProfile {
        n: DEFAULT_N,
        gamma: 150,
        pm1_fraction: 0.90,
        density_decay: 0.5,
        dense_cols: 5,
        planted_kernel_cols: 1,
        seed: 0,
    }
}

impl CorpusProfile {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_gamma(mut self, gamma: usize) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_planted(mut self, planted: usize) -> Self {
        self.planted_kernel_cols = planted;
        self
    }

    pub fn with_density_decay(mut self, decay: f64) -> Self {
        self.density_decay = decay;
        self
    }

    pub fn with_dense_cols(mut self, dense: usize) -> Self {
        self.dense_cols = dense;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |s: String| Err(ProfileError(s));
        if self.gamma < 3 {
            return bad(format!("gamma {} < 3", self.gamma));
        }
        if self.planted_kernel_cols < 1 {
            return bad("at least one planted kernel column is required".into());
        }
        if self.n < 10 * self.gamma {
            return bad(format!(
                "n = {} is below 10·gamma = {}",
                self.n,
                10 * self.gamma
            ));
        }
        if !(0.0..=1.0).contains(&self.pm1_fraction) {
            return bad(format!("pm1_fraction {} outside [0, 1]", self.pm1_fraction));
        }
        if !(self.density_decay > 0.0 && self.density_decay.is_finite()) {
            return bad(format!(
                "density_decay {} must be positive",
                self.density_decay
            ));
        }
        if self.dense_cols >= self.gamma {
            return bad("dense columns must be fewer than gamma".into());
        }
        let sparse = self.n - self.dense_cols;
        if 2 * self.planted_kernel_cols + 2 > sparse / 2 {
            return bad("too many planted columns for the matrix size".into());
        }
        Ok(())
    }
}

/// One planted relation: `−col[target] + alpha·col[a] + beta·col[b] = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlantedRelation {
    pub target: usize,
    pub a: usize,
    pub alpha: Residue,
    pub b: usize,
    pub beta: Residue,
}

impl PlantedRelation {
    /// Sparse kernel witness of length `n`.
    pub fn witness(&self, m: &PrimeModulus, n: usize) -> Vec<Residue> {
        let mut w = vec![m.zero(); n];
        w[self.target] = m.from_i64(-1);
        w[self.a] = self.alpha.clone();
        w[self.b] = self.beta.clone();
        w
    }
}

/// Generator output with its own bookkeeping.
#[derive(Clone, Debug)]
pub struct GeneratedCorpus {
    pub matrix: SparseMatrix,
    pub planted: Vec<PlantedRelation>,
    /// ±1 coefficients drawn before planting overwrote any column.
    pub pm1_drawn: usize,
    pub entries_drawn: usize,
}

pub fn generate(profile: &CorpusProfile, ell: &PrimeModulus) -> Result<SparseMatrix, ProfileError> {
    Ok(generate_with_witness(profile, ell)?.matrix)
}

pub fn generate_with_witness(
    profile: &CorpusProfile,
    ell: &PrimeModulus,
) -> Result<GeneratedCorpus, ProfileError> {
    profile.validate()?;
    let m = ell;
    let n = profile.n;
    let dense = profile.dense_cols;
    let sparse = n - dense;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let mut cumulative = Vec::with_capacity(sparse);
    let mut total = 0.0f64;
    for j in 0..sparse {
        total += libm::pow((j + 1) as f64, -profile.density_decay);
        cumulative.push(total);
    }

    let spread = (profile.gamma / 5) as u64;
    let sparse_target = (profile.gamma - dense) as u64;
    let lo = sparse_target.saturating_sub(spread).max(1);
    let hi = (sparse_target + spread).min(sparse as u64);

    let mut rows: Vec<Vec<(usize, Residue)>> = Vec::with_capacity(n);
    let mut pm1_drawn = 0usize;
    let mut entries_drawn = 0usize;
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..n {
        let t = rng.gen_range(lo..=hi) as usize;
        chosen.clear();
        while chosen.len() < t {
            let u = rng.gen::<f64>() * total;
            let j = cumulative.partition_point(|&c| c <= u).min(sparse - 1);
            if !chosen.contains(&j) {
                chosen.push(j);
            }
        }
        chosen.sort_unstable();
        let mut row = Vec::with_capacity(t);
        for &j in &chosen {
            let v = loop {
                let sign: i64 = if rng.gen::<bool>() { 1 } else { -1 };
                let v = if rng.gen::<f64>() < profile.pm1_fraction {
                    sign
                } else {
                    sign * rng.gen_range(2..=SMALL_MAGNITUDE) as i64
                };
                let r = m.from_i64(v);
                if !r.is_zero() {
                    if v.abs() == 1 {
                        pm1_drawn += 1;
                    }
                    break r;
                }
            };
            entries_drawn += 1;
            row.push((j, v));
        }
        rows.push(row);
    }

    let mut dense_values: Vec<Vec<Residue>> = (0..dense)
        .map(|_| (0..n).map(|_| m.random_nonzero(&mut rng)).collect())
        .collect();

    // Plant targets in the upper half of the sparse columns; sources are any
    // other sparse columns.
    let mut planted = Vec::with_capacity(profile.planted_kernel_cols);
    let mut used: Vec<usize> = Vec::new();
    let pick = |rng: &mut ChaCha8Rng, lo: usize, used: &mut Vec<usize>| loop {
        let c = rng.gen_range(lo as u64..sparse as u64) as usize;
        if !used.contains(&c) {
            used.push(c);
            break c;
        }
    };
    let mut columns = SparseColumns::new(&rows, sparse);
    for p in 0..profile.planted_kernel_cols {
        let alpha = m.random_nonzero(&mut rng);
        let beta = m.random_nonzero(&mut rng);
        if p == 0 && dense >= 2 {
            // the last dense column becomes alpha·(sparse column) + beta·(dense column 0)
            let a = pick(&mut rng, 0, &mut used);
            let mut combined = vec![m.zero(); n];
            for (i, v) in columns.column(a) {
                combined[i] = m.mul(&alpha, v);
            }
            for (i, c) in combined.iter_mut().enumerate() {
                let t = m.mul(&beta, &dense_values[0][i]);
                m.add_assign(c, &t);
            }
            dense_values[dense - 1] = combined;
            planted.push(PlantedRelation {
                target: n - 1,
                a,
                alpha,
                b: sparse,
                beta,
            });
            continue;
        }
        let target = pick(&mut rng, sparse / 2, &mut used);
        let a = pick(&mut rng, 0, &mut used);
        let b = pick(&mut rng, 0, &mut used);
        let mut combined: Vec<(usize, Residue)> = Vec::new();
        for (i, v) in columns.column(a) {
            combined.push((i, m.mul(&alpha, v)));
        }
        for (i, v) in columns.column(b) {
            combined.push((i, m.mul(&beta, v)));
        }
        columns.replace(&mut rows, target, combined, m);
        planted.push(PlantedRelation {
            target,
            a,
            alpha,
            b,
            beta,
        });
    }

    let mut builder = MatrixBuilder::new(m, n);
    builder.reserve(entries_drawn);
    for row in rows {
        builder
            .push_values(row)
            .expect("generated rows are within range");
    }
    for (t, values) in dense_values.into_iter().enumerate() {
        builder.dense_column(sparse + t, values);
    }
    let matrix = builder.build().expect("generated matrix is valid");
    Ok(GeneratedCorpus {
        matrix,
        planted,
        pm1_drawn,
        entries_drawn,
    })
}

/// Column view over the row lists, kept in sync while planting.
struct SparseColumns {
    cols: Vec<Vec<(usize, Residue)>>,
}

impl SparseColumns {
    fn new(rows: &[Vec<(usize, Residue)>], ncols: usize) -> Self {
        let mut cols = vec![Vec::new(); ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row {
                cols[*j].push((i, v.clone()));
            }
        }
        SparseColumns { cols }
    }

    fn column(&self, j: usize) -> Vec<(usize, &Residue)> {
        self.cols[j].iter().map(|(i, v)| (*i, v)).collect()
    }

    /// Replaces column `j` by `entries` (duplicate rows are summed).
    fn replace(
        &mut self,
        rows: &mut [Vec<(usize, Residue)>],
        j: usize,
        entries: Vec<(usize, Residue)>,
        m: &PrimeModulus,
    ) {
        for (i, _) in std::mem::take(&mut self.cols[j]) {
            rows[i].retain(|(c, _)| *c != j);
        }
        let mut merged: Vec<(usize, Residue)> = Vec::new();
        let mut sorted = entries;
        sorted.sort_by_key(|e| e.0);
        for (i, v) in sorted {
            match merged.last_mut() {
                Some((pi, pv)) if *pi == i => *pv = m.add(pv, &v),
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|(_, v)| !v.is_zero());
        for (i, v) in &merged {
            let row = &mut rows[*i];
            let pos = row.partition_point(|(c, _)| *c < j);
            row.insert(pos, (j, v.clone()));
        }
        self.cols[j] = merged;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmatrix::{matrix_stats, spmv_sequential, write_matrix};

    fn modulus() -> PrimeModulus {
        PrimeModulus::from_prime_u64(0xffff_ffff_ffff_ffc5).unwrap()
    }

    #[test]
    fn presets() {
        assert_eq!(profile_ffs().gamma, 100);
        assert_eq!(profile_ffs().pm1_fraction, 0.90);
        assert_eq!(profile_ffs().dense_cols, 0);
        assert_eq!(profile_nfs().gamma, 150);
        assert_eq!(profile_nfs().dense_cols, 5);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(profile_ffs().with_gamma(2).with_n(100).validate().is_err());
        assert!(profile_ffs().with_n(999).validate().is_err());
        assert!(profile_ffs().with_planted(0).validate().is_err());
        assert!(profile_ffs().with_n(1000).validate().is_ok());
    }

    #[test]
    fn planted_witnesses_are_kernel_vectors() {
        let m = modulus();
        for (dense, planted) in [(0, 3), (5, 2), (1, 2)] {
            let p = profile_nfs()
                .with_n(400)
                .with_gamma(20)
                .with_dense_cols(dense)
                .with_planted(planted)
                .with_seed(7);
            let g = generate_with_witness(&p, &m).unwrap();
            assert_eq!(g.planted.len(), planted);
            for rel in &g.planted {
                let w = rel.witness(&m, p.n);
                assert!(spmv_sequential(&g.matrix, &w)
                    .unwrap()
                    .iter()
                    .all(|v| v.is_zero()));
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let m = modulus();
        let p = profile_ffs().with_n(500).with_gamma(20).with_seed(99);
        let bytes = |a: &SparseMatrix| {
            let mut out = Vec::new();
            write_matrix(&mut out, a).unwrap();
            out
        };
        let a = generate(&p, &m).unwrap();
        let b = generate(&p, &m).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate(&p.clone().with_seed(100), &m).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn row_weight_spread() {
        let m = modulus();
        let p = profile_ffs().with_n(3000).with_gamma(100).with_seed(1);
        let s = matrix_stats(&generate(&p, &m).unwrap());
        assert!(
            (s.avg_row_weight - 100.0).abs() < 2.0,
            "{}",
            s.avg_row_weight
        );
        assert!(s.row_weight_stddev <= 15.0, "{}", s.row_weight_stddev);
    }
}
