//! Generate, eliminate, balance, solve on a 2x2 grid, lift and verify, with
//! a progress callback and the stage timings.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sldlag::balance::GridSpec;
use sldlag::corpus::{generate, profile_ffs};
use sldlag::modring::PrimeModulus;
use sldlag::pipeline::{run_pipeline, PipelineConfig};
use sldlag::solver::{verify_kernel, BlockingParams, ProgressSink, SolveOptions};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ell = PrimeModulus::random(&mut rng, 200).expect("prime");
    let a = generate(
        &profile_ffs().with_n(1000).with_gamma(30).with_seed(77),
        &ell,
    )
    .expect("valid profile");

    let config = PipelineConfig {
        grid: GridSpec::new(2, 2).unwrap(),
        solve: SolveOptions {
            blocking: BlockingParams::new(2, 4).unwrap(),
            seed: 3,
            progress: Some(ProgressSink {
                batch: 200,
                sink: Arc::new(|p| {
                    println!(
                        "  {} col {} iter {}: {:.1} ms for {} products, {} bytes",
                        p.phase, p.column, p.iteration, p.spmv_ms, p.batch_iterations, p.comm_bytes
                    )
                }),
            }),
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_pipeline(&a, &config).expect("pipeline");
    assert!(verify_kernel(&a, &report.kernel));
    assert!(report.kernel.iter().any(|x| !x.is_zero()));

    println!(
        "original {:?}, reduced {:?}, grid dimension {}",
        report.original_shape, report.reduced_shape, report.padded_dim
    );
    println!(
        "imbalance {:.3}, passes {}",
        report.imbalance.unwrap_or(f64::NAN),
        report.passes
    );
    println!(
        "krylov products per column: {:?}",
        report.solver.krylov_spmvs
    );
    println!(
        "messages {}, bytes {}",
        report.comm.messages, report.comm.bytes
    );
    for t in &report.timings {
        println!("  {:<8} {:.3}s", t.stage, t.seconds);
    }
}
