//! Wall-clock arithmetic for large runs from per-iteration costs, and the
//! communication share of each published configuration.

use sldlag::perfmodel::{comm_ratio, days, estimate, report_rows, two_sig, CalibrationParams};
use sldlag::solver::BlockingParams;

fn main() {
    // 3.6M rows, blocking (4,8), 142 ms SpMV + 27 ms communication, 2 h Lingen
    let bp = BlockingParams::new(4, 8).unwrap();
    let e = estimate(
        3_602_667,
        bp,
        &CalibrationParams::direct(0.142, 0.027),
        2.0 * 3600.0,
    );
    println!("3.6M rows, (4,8):");
    for (k, v) in report_rows(&e) {
        println!("  {k:<20} {v}");
    }

    // 7.3M rows on the CPU cluster: 2.1 s per iteration, (12,24)
    let e = estimate(
        7_287_476,
        BlockingParams::new(12, 24).unwrap(),
        &CalibrationParams::direct(1.7, 0.4),
        15.0 * 3600.0,
    );
    println!(
        "7.3M rows, (12,24): krylov {} days, mksol {} days",
        two_sig(days(e.krylov_seconds)),
        two_sig(days(e.mksol_seconds))
    );

    println!("comm share per configuration (compute ms, comm ms):");
    for (label, compute, comm) in [
        ("3.6M (4,8)", 142.0, 27.0),
        ("3.6M (2,4)", 72.0, 41.0),
        ("3M (8,16)", 228.0, 0.0),
        ("3M (4,8)", 115.0, 23.0),
        ("3M (2,4)", 58.0, 35.0),
        ("6M (2,4)", 123.0, 69.0),
        ("7.3M 8 GPUs", 420.0, 195.0),
        ("7.3M 768 cores", 1700.0, 400.0),
        ("7.3M 96 GPUs", 420.0, 195.0),
    ] {
        println!(
            "  {label:<15} {compute:>6} + {comm:>4}  -> {:>3.0}%",
            comm_ratio(compute, comm) * 100.0
        );
    }
}
