//! Wall-clock estimates for Krylov and Mksol from per-iteration costs.
//!
//! Column tasks run side by side, so a phase lasts as long as one task:
//! its iteration count times the cost of one iteration (compute plus
//! communication) on the nodes serving that task.

use serde::Serialize;

use crate::gridmv::CommLog;
use crate::solver::BlockingParams;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Per-iteration costs of one column task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationParams {
    pub t_iter_compute: f64,
    pub t_iter_comm: f64,
    pub link_latency: f64,
    /// Bytes per second.
    pub link_bandwidth: f64,
    pub nodes_per_subtask: usize,
}

impl CalibrationParams {
    /// Costs given directly, in seconds.
    pub fn direct(t_iter_compute: f64, t_iter_comm: f64) -> Self {
        CalibrationParams {
            t_iter_compute,
            t_iter_comm,
            link_latency: 0.0,
            link_bandwidth: f64::INFINITY,
            nodes_per_subtask: 1,
        }
    }

    /// Costs derived from the matrix size and link constants: the non-zeros
    /// are shared evenly by the nodes, and messages are charged one after
    /// the other.
    pub fn derived(
        nnz: u64,
        nnz_per_second: f64,
        nodes_per_subtask: usize,
        messages_per_iteration: u64,
        bytes_per_iteration: u64,
        link_latency: f64,
        link_bandwidth: f64,
    ) -> Self {
        let nodes = nodes_per_subtask.max(1);
        CalibrationParams {
            t_iter_compute: nnz as f64 / nodes as f64 / nnz_per_second,
            t_iter_comm: comm_seconds(
                messages_per_iteration as f64,
                bytes_per_iteration as f64,
                link_latency,
                link_bandwidth,
            ),
            link_latency,
            link_bandwidth,
            nodes_per_subtask: nodes,
        }
    }

    pub fn t_iter(&self) -> f64 {
        self.t_iter_compute + self.t_iter_comm
    }

    pub fn is_valid(&self) -> bool {
        [
            self.t_iter_compute,
            self.t_iter_comm,
            self.link_latency,
            self.link_bandwidth,
        ]
        .iter()
        .all(|x| *x >= 0.0 && !x.is_nan())
    }
}

fn comm_seconds(messages: f64, bytes: f64, latency: f64, bandwidth: f64) -> f64 {
    let transfer = if bytes == 0.0 { 0.0 } else { bytes / bandwidth };
    messages * latency + transfer
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunEstimate {
    pub krylov_iterations: u64,
    pub mksol_iterations: u64,
    pub krylov_seconds: f64,
    pub mksol_seconds: f64,
    /// Krylov plus Mksol.
    pub total_seconds: f64,
    /// Supplied by the caller, not modelled.
    pub lingen_seconds: f64,
    /// `t_comm / (t_comm + t_compute)`.
    pub comm_ratio: f64,
}

impl RunEstimate {
    pub fn total_with_lingen(&self) -> f64 {
        self.total_seconds + self.lingen_seconds
    }
}

pub fn days(seconds: f64) -> f64 {
    seconds / SECONDS_PER_DAY
}

/// `comm / (comm + compute)`, 0 when both vanish.
pub fn comm_ratio(t_compute: f64, t_comm: f64) -> f64 {
    let t = t_compute + t_comm;
    if t > 0.0 {
        t_comm / t
    } else {
        0.0
    }
}

/// Krylov runs `⌈N/n⌉ + ⌈N/m⌉` iterations per task, Mksol `⌈N/n⌉`.
pub fn estimate(
    n_rows: u64,
    bp: BlockingParams,
    cal: &CalibrationParams,
    lingen_seconds: f64,
) -> RunEstimate {
    let kn = n_rows.div_ceil(bp.n as u64);
    let km = n_rows.div_ceil(bp.m as u64);
    let krylov_iterations = kn + km;
    let mksol_iterations = kn;
    let t = cal.t_iter();
    let krylov_seconds = krylov_iterations as f64 * t;
    let mksol_seconds = mksol_iterations as f64 * t;
    RunEstimate {
        krylov_iterations,
        mksol_iterations,
        krylov_seconds,
        mksol_seconds,
        total_seconds: krylov_seconds + mksol_seconds,
        lingen_seconds,
        comm_ratio: comm_ratio(cal.t_iter_compute, cal.t_iter_comm),
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("communication log is empty")]
pub struct EmptyLog;

/// Calibration from a measured grid run: communication from the logged
/// traffic and the given link constants, compute from the measurement.
pub fn calibrate_from_run(
    log: &CommLog,
    measured_compute_seconds: f64,
    link_latency: f64,
    link_bandwidth: f64,
    nodes_per_subtask: usize,
) -> Result<CalibrationParams, EmptyLog> {
    if log.is_empty() {
        return Err(EmptyLog);
    }
    let iters = log.len() as f64;
    let msgs = log.total_messages() as f64 / iters;
    let bytes = log.total_bytes() as f64 / iters;
    // An iteration always pays at least one round of latency.
    let t_iter_comm = comm_seconds(msgs.max(1.0), bytes, link_latency, link_bandwidth);
    Ok(CalibrationParams {
        t_iter_compute: measured_compute_seconds / iters,
        t_iter_comm,
        link_latency,
        link_bandwidth,
        nodes_per_subtask,
    })
}

/// Two significant figures, as printed in reports.
pub fn two_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (1 - mag).max(0) as usize;
    let scale = 10f64.powi(1 - mag);
    let r = (x * scale).round() / scale;
    format!("{r:.decimals$}")
}

/// Report line set for the command line, as `(label, value)` pairs.
pub fn report_rows(e: &RunEstimate) -> Vec<(&'static str, String)> {
    vec![
        ("krylov_iterations", e.krylov_iterations.to_string()),
        ("mksol_iterations", e.mksol_iterations.to_string()),
        ("krylov_days", two_sig(days(e.krylov_seconds))),
        ("mksol_days", two_sig(days(e.mksol_seconds))),
        ("lingen_days", two_sig(days(e.lingen_seconds))),
        ("total_days", two_sig(days(e.total_with_lingen()))),
        ("comm_ratio_percent", format!("{:.0}", e.comm_ratio * 100.0)),
    ]
}
