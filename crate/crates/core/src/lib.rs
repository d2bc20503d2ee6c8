//! Exact sparse linear algebra modulo a large prime.
//!
//! The crate finds non-trivial kernel vectors of large sparse matrices over
//! Z/ℓZ, the linear-algebra step of index-calculus discrete logarithm
//! computations. The pieces:
//!
//! - [`modring`]: canonical arithmetic modulo ℓ and RNS accumulation.
//! - [`spmatrix`]: CSR storage with coefficient classes, SpMV, file formats.
//! - [`corpus`]: synthetic matrices with a planted kernel.
//! - [`sge`]: structured Gaussian elimination with a liftable transcript.
//! - [`balance`]: weight-balancing permutations and the block split.
//! - [`gridmv`]: SpMV over a 2D grid of message-passing workers.
//! - [`solver`]: scalar and block Wiedemann.
//! - [`perfmodel`]: wall-clock estimates from per-iteration costs.
//! - [`pipeline`] and [`cli`]: the end-to-end driver.

pub mod balance;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod gridmv;
pub mod io;
pub mod modring;
pub mod perfmodel;
pub mod pipeline;
pub mod sge;
pub mod solver;
pub mod spmatrix;

pub use error::{Error, Result};

/// Upper bound on concurrently used execution contexts.
///
/// Read from `SLDLAG_CONTEXTS`, defaulting to the available parallelism.
pub fn contexts() -> usize {
    std::env::var("SLDLAG_CONTEXTS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}
