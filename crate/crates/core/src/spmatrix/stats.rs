use serde::Serialize;

use super::SparseMatrix;

/// Summary statistics of a matrix.
///
/// `column_weight_histogram[0]` counts empty columns; bucket `b ≥ 1` counts
/// columns whose weight lies in `[2^(b-1), 2^b)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixStats {
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
    pub avg_row_weight: f64,
    pub row_weight_stddev: f64,
    pub column_weight_histogram: Vec<usize>,
    pub pm1_fraction: f64,
    pub dense_cols: usize,
}

pub fn matrix_stats(a: &SparseMatrix) -> MatrixStats {
    let weights = a.row_weights();
    let nnz: usize = weights.iter().sum();
    let nrows = a.nrows();
    let (avg, stddev) = if nrows == 0 {
        (0.0, 0.0)
    } else {
        let mean = nnz as f64 / nrows as f64;
        let var = weights
            .iter()
            .map(|&w| (w as f64 - mean).powi(2))
            .sum::<f64>()
            / nrows as f64;
        (mean, var.sqrt())
    };
    let mut hist: Vec<usize> = Vec::new();
    for w in a.column_weights() {
        let b = if w == 0 {
            0
        } else {
            (usize::BITS - w.leading_zeros()) as usize
        };
        if hist.len() <= b {
            hist.resize(b + 1, 0);
        }
        hist[b] += 1;
    }
    let pm1_fraction = if nnz == 0 {
        0.0
    } else {
        a.pm1_count() as f64 / nnz as f64
    };
    MatrixStats {
        nrows,
        ncols: a.ncols(),
        nnz,
        avg_row_weight: avg,
        row_weight_stddev: stddev,
        column_weight_histogram: hist,
        pm1_fraction,
        dense_cols: a.dense_columns().len(),
    }
}

impl MatrixStats {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "rows: {}\ncols: {}\nnnz: {}\navg row weight: {:.3}\nrow weight stddev: {:.3}\n±1 fraction: {:.4}\ndense columns: {}\ncolumn weight histogram:\n",
            self.nrows,
            self.ncols,
            self.nnz,
            self.avg_row_weight,
            self.row_weight_stddev,
            self.pm1_fraction,
            self.dense_cols
        );
        for (b, count) in self.column_weight_histogram.iter().enumerate() {
            let range = if b == 0 {
                "0".to_string()
            } else {
                format!("{}..{}", 1usize << (b - 1), (1usize << b) - 1)
            };
            s.push_str(&format!("  {range:>16}: {count}\n"));
        }
        s
    }
}
