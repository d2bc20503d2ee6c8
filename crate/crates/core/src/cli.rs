//! The `sldlag` command line.
//!
//! Exit codes: 0 success, 1 solver or verification failure (including an
//! interrupted run), 2 usage error, 3 I/O or file format error.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::balance::{
    balance_permutation, identity_permutation, imbalance, split, store_permutation, GridSpec,
};
use crate::config::{parse_bool, ConfigError, ConfigFile};
use crate::corpus::{generate_with_witness, profile_ffs, profile_nfs};
use crate::error::{Error, GridError, Result, SolverError};
use crate::gridmv::{GridConfig, GridEngine, GridPlan, Schedule, TransportKind};
use crate::modring::PrimeModulus;
use crate::perfmodel::{calibrate_from_run, comm_ratio, estimate, report_rows, CalibrationParams};
use crate::pipeline::{run_pipeline, square_up, PipelineConfig, PipelineReport};
use crate::sge::{projected_cost, sge_reduce, store_transcript, SgeOptions};
use crate::solver::{
    verify_kernel, Algorithm, BlockingParams, CheckpointConfig, Progress, ProgressSink,
    SolveOptions, DEFAULT_MARGIN, DEFAULT_RETRIES,
};
use crate::spmatrix::{
    load_matrix, load_vector, matrix_stats, store_matrix, store_vector, SparseMatrix,
};

#[derive(Parser, Debug)]
#[command(
    name = "sldlag",
    version,
    about = "Kernel vectors of sparse matrices modulo a large prime"
)]
pub struct Cli {
    /// key=value file supplying flags; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Append one JSON record per batch of iterations to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub log_json: Option<PathBuf>,
    /// Iterations per log record.
    #[arg(long, global = true, default_value_t = 256, value_name = "K")]
    pub log_batch: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic matrix with a planted kernel.
    Gen(GenArgs),
    /// Print matrix statistics.
    Stats(StatsArgs),
    /// Structured Gaussian elimination.
    Sge(SgeArgs),
    /// Balancing permutations and block imbalance.
    Balance(BalanceArgs),
    /// Find a kernel vector.
    Solve(SolveArgs),
    /// Check a kernel vector.
    Verify(VerifyArgs),
    /// Wall-clock estimate from per-iteration costs.
    Estimate(EstimateArgs),
    /// Time grid SpMV iterations and calibrate the estimator.
    BenchSpmv(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileKind {
    Ffs,
    Nfs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

/// Prime given as decimal, `0x` hex, or `bits:N` for a random prime.
#[derive(Clone, Debug)]
pub enum EllSpec {
    Value(BigUint),
    Bits(u64),
}

impl FromStr for EllSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(b) = s.strip_prefix("bits:") {
            return b
                .parse()
                .map(EllSpec::Bits)
                .map_err(|_| format!("bad bit count in {s:?}"));
        }
        let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(h) => BigUint::parse_bytes(h.as_bytes(), 16),
            None => BigUint::parse_bytes(s.as_bytes(), 10),
        };
        v.map(EllSpec::Value)
            .ok_or_else(|| format!("expected decimal, 0x hex or bits:N, got {s:?}"))
    }
}

impl EllSpec {
    /// Random primes are drawn from a stream of `seed` kept apart from the
    /// matrix generator.
    pub fn resolve(&self, seed: u64) -> Result<PrimeModulus> {
        Ok(match self {
            EllSpec::Value(v) => PrimeModulus::new(v.clone())?,
            EllSpec::Bits(b) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(0x6c);
                PrimeModulus::random(&mut rng, *b)?
            }
        })
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "ffs")]
    pub profile: ProfileKind,
    /// Dimension (rows = columns).
    #[arg(long)]
    pub n: Option<usize>,
    /// Average row weight.
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub dense_cols: Option<usize>,
    /// Number of planted kernel relations.
    #[arg(long)]
    pub planted: Option<usize>,
    /// Exponent of the power law picking columns.
    #[arg(long)]
    pub density_decay: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// The prime: decimal, 0x hex, or bits:N for a random prime.
    #[arg(long, default_value = "bits:64", conflicts_with_all = ["ell_bits", "ell_hex"])]
    pub ell: EllSpec,
    /// Random prime of this many bits, drawn from the seed.
    #[arg(long, conflicts_with = "ell_hex")]
    pub ell_bits: Option<u64>,
    /// The prime in hexadecimal.
    #[arg(long)]
    pub ell_hex: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the first planted kernel vector.
    #[arg(long)]
    pub witness: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct SgeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Largest row weight a combination may produce.
    #[arg(long)]
    pub max_fill: Option<usize>,
    /// Stop once the matrix fits in this many bytes.
    #[arg(long)]
    pub memory_budget: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BalanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "1x1")]
    pub grid: GridSpec,
    /// Write the permutations (SLDP).
    #[arg(long)]
    pub perm: Option<PathBuf>,
    /// Write each block as `block_<i>_<j>.sldm` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Use identity permutations.
    #[arg(long)]
    pub identity: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Kernel vector output (SLDV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "block")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Defaults to 2n.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "1x1")]
    pub grid: GridSpec,
    #[arg(long, default_value = "channel")]
    pub transport: TransportKind,
    #[arg(long, default_value = "sequential")]
    pub schedule: Schedule,
    /// Message timeout in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_sge: bool,
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub max_fill: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: usize,
    #[arg(long, default_value_t = DEFAULT_RETRIES)]
    pub retries: u32,
    /// Project on unit vectors instead of a random block.
    #[arg(long)]
    pub unit_x: bool,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long, default_value_t = CheckpointConfig::DEFAULT_INTERVAL)]
    pub checkpoint_interval: u64,
    /// Stop every Krylov column at this iteration.
    #[arg(long)]
    pub halt_after: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub vector: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub n_rows: u64,
    /// Blocking parameters as n,m.
    #[arg(long, default_value = "1,2")]
    pub blocking: BlockingParams,
    /// Compute time per iteration, milliseconds.
    #[arg(long)]
    pub t_compute: f64,
    /// Communication time per iteration, milliseconds.
    #[arg(long, default_value_t = 0.0)]
    pub t_comm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lingen_hours: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Matrix to iterate; a generated FFS-profile matrix otherwise.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value = "bits:64")]
    pub ell: EllSpec,
    #[arg(long, default_value = "2x2")]
    pub grid: GridSpec,
    #[arg(long, default_value_t = 20)]
    pub iterations: u64,
    #[arg(long, default_value = "channel")]
    pub transport: TransportKind,
    #[arg(long, default_value = "sequential")]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_balance: bool,
    /// Link latency for the calibrated estimate, microseconds.
    #[arg(long, default_value_t = 2.0)]
    pub latency_us: f64,
    /// Link bandwidth for the calibrated estimate, GB/s.
    #[arg(long, default_value_t = 10.0)]
    pub bandwidth_gbs: f64,
    /// Rows of the matrix to extrapolate to; defaults to the benchmarked one.
    #[arg(long)]
    pub target_rows: Option<u64>,
    #[arg(long, default_value = "1,2")]
    pub blocking: BlockingParams,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(args) {
        Ok(c) => c,
        Err(ParseFailure::Clap(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
        Err(ParseFailure::Other(e)) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Solver(SolverError::Interrupted(t)) = e.root() {
                eprintln!("stopped after iteration {t}; run again with the same checkpoint directory to resume");
            }
            exit_code(&e)
        }
    }
}

/// Exit code for an error, after peeling stage attribution.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Usage(_) | Error::Profile(_) | Error::Arith(_) => 2,
        Error::Config(ConfigError::Io { .. }) => 3,
        Error::Config(_) => 2,
        Error::Format(_) | Error::Io(_) | Error::Matrix(_) | Error::Balance(_) => 3,
        Error::Solver(
            SolverError::Format(_) | SolverError::Io(_) | SolverError::CheckpointMismatch(_),
        ) => 3,
        Error::Grid(GridError::Io(_)) => 3,
        _ => 1,
    }
}

enum ParseFailure {
    Clap(clap::Error),
    Other(Error),
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn parse(args: Vec<OsString>) -> std::result::Result<Cli, ParseFailure> {
    let args = expand_config(args).map_err(ParseFailure::Other)?;
    let matches = command()
        .try_get_matches_from(args)
        .map_err(ParseFailure::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseFailure::Clap)
}

const GLOBAL_VALUED: [&str; 3] = ["--config", "--log-json", "--log-batch"];

/// Splices the entries of `--config FILE` in right after the subcommand
/// name, so any flag given on the command line comes later and wins.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let file = ConfigFile::load(&path)?;
    let cmd = command();
    let mut sub_at = None;
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_VALUED.contains(&s.as_ref()) {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            sub_at = Some(i);
            break;
        }
        i += 1;
    }
    let Some(at) = sub_at else {
        return Ok(args);
    };
    let Some(sub) = cmd.find_subcommand(args[at].to_string_lossy().as_ref()) else {
        return Ok(args);
    };
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in &file.entries {
        if key == "config" {
            return Err(Error::Usage(
                "a config file cannot name another config file".into(),
            ));
        }
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            if parse_bool(key, value)? {
                injected.push(format!("--{key}").into());
            }
        } else {
            injected.push(format!("--{key}={value}").into());
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

/// JSON-lines writer shared by worker threads.
struct JsonLog {
    out: Mutex<BufWriter<File>>,
}

impl JsonLog {
    fn open(path: &Path) -> Result<Arc<Self>> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Arc::new(JsonLog {
            out: Mutex::new(BufWriter::new(f)),
        }))
    }

    fn record<T: Serialize>(&self, rec: &T) {
        let line = serde_json::to_string(rec).expect("log records serialize");
        let mut w = self.out.lock().expect("log writer");
        let _ = writeln!(w, "{line}");
    }

    fn flush(&self) -> Result<()> {
        self.out.lock().expect("log writer").flush()?;
        Ok(())
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let log = cli.log_json.as_deref().map(JsonLog::open).transpose()?;
    let code = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Sge(a) => cmd_sge(a),
        Command::Balance(a) => cmd_balance(a),
        Command::Solve(a) => cmd_solve(a, log.clone(), cli.log_batch),
        Command::Verify(a) => cmd_verify(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::BenchSpmv(a) => cmd_bench(a, log.clone(), cli.log_batch),
    };
    if let Some(l) = &log {
        l.flush()?;
    }
    code
}

fn load(path: &Path) -> Result<SparseMatrix> {
    load_matrix(path).map_err(|e| Error::at("load")(e.into()))
}

fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let mut p = match a.profile {
        ProfileKind::Ffs => profile_ffs(),
        ProfileKind::Nfs => profile_nfs(),
    };
    if let Some(n) = a.n {
        p = p.with_n(n);
    }
    if let Some(g) = a.gamma {
        p = p.with_gamma(g);
    }
    if let Some(d) = a.dense_cols {
        p = p.with_dense_cols(d);
    }
    if let Some(k) = a.planted {
        p = p.with_planted(k);
    }
    if let Some(d) = a.density_decay {
        p = p.with_density_decay(d);
    }
    p = p.with_seed(a.seed);
    let spec = match (&a.ell_bits, &a.ell_hex) {
        (Some(b), _) => EllSpec::Bits(*b),
        (None, Some(h)) => format!("0x{}", h.trim_start_matches("0x"))
            .parse()
            .map_err(Error::Usage)?,
        (None, None) => a.ell.clone(),
    };
    let ell = spec.resolve(a.seed)?;
    let g = generate_with_witness(&p, &ell)?;
    store_matrix(&g.matrix, &a.out)?;
    if let Some(w) = &a.witness {
        let rel = g
            .planted
            .first()
            .ok_or_else(|| Error::Usage("--witness needs at least one planted relation".into()))?;
        store_vector(&ell, &rel.witness(&ell, g.matrix.ncols()), w)?;
    }
    println!(
        "generated {}x{} matrix, {} non-zeros, {} planted relations, ell of {} bits",
        g.matrix.nrows(),
        g.matrix.ncols(),
        g.matrix.nnz(),
        g.planted.len(),
        ell.bit_length()
    );
    Ok(0)
}

fn cmd_stats(a: &StatsArgs) -> Result<i32> {
    let m = load(&a.input)?;
    let s = matrix_stats(&m);
    match a.format {
        ReportFormat::Json => println!("{}", serde_json::to_string(&s).expect("stats serialize")),
        ReportFormat::Csv => {
            println!("nrows,ncols,nnz,avg_row_weight,row_weight_stddev,pm1_fraction,dense_cols");
            println!(
                "{},{},{},{},{},{},{}",
                s.nrows,
                s.ncols,
                s.nnz,
                s.avg_row_weight,
                s.row_weight_stddev,
                s.pm1_fraction,
                s.dense_cols
            );
        }
        ReportFormat::Text => print!("{}", s.to_text()),
    }
    Ok(0)
}

fn cmd_sge(a: &SgeArgs) -> Result<i32> {
    let m = load(&a.input)?;
    let out = sge_reduce(
        &m,
        &SgeOptions {
            max_fill_row_weight: a.max_fill,
            memory_budget_bytes: a.memory_budget,
        },
    );
    store_matrix(&out.matrix, &a.out)?;
    if let Some(t) = &a.transcript {
        store_transcript(&out.transcript, t)?;
    }
    println!(
        "reduced {}x{} to {}x{}",
        m.nrows(),
        m.ncols(),
        out.matrix.nrows(),
        out.matrix.ncols()
    );
    println!(
        "projected cost {} -> {}",
        projected_cost(&m),
        projected_cost(&out.matrix)
    );
    println!(
        "steps: {} zero columns dropped, {} singletons solved, {} row combinations; stopped: {:?}",
        out.report.dropped_zero_cols,
        out.report.solved_singletons,
        out.report.combined_rows,
        out.report.stop_reason
    );
    Ok(0)
}

fn cmd_balance(a: &BalanceArgs) -> Result<i32> {
    let m = load(&a.input)?;
    let ident = identity_permutation(&m, a.grid);
    let perm = if a.identity {
        ident.clone()
    } else {
        balance_permutation(&m, a.grid)?
    };
    let bs = split(&m, &perm, a.grid)?;
    let imb = imbalance(&bs)?;
    let imb_id = imbalance(&split(&m, &ident, a.grid)?)?;
    if let Some(p) = &a.perm {
        store_permutation(&perm, p)?;
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        for i in 0..a.grid.r {
            for j in 0..a.grid.c {
                store_matrix(bs.block(i, j), &dir.join(format!("block_{i}_{j}.sldm")))?;
            }
        }
    }
    println!("grid {} padded dimension {}", a.grid, perm.n_padded);
    println!("imbalance {imb:.4}");
    println!("identity imbalance {imb_id:.4}");
    Ok(0)
}

fn progress_sink(log: Option<Arc<JsonLog>>, batch: u64) -> Option<ProgressSink> {
    let log = log?;
    Some(ProgressSink {
        batch,
        sink: Arc::new(move |p: &Progress| log.record(p)),
    })
}

fn cmd_solve(a: &SolveArgs, log: Option<Arc<JsonLog>>, batch: u64) -> Result<i32> {
    let blocking = BlockingParams::new(a.n, a.m.unwrap_or(2 * a.n)).map_err(Error::Usage)?;
    let matrix = load(&a.input)?;
    let checkpoint = a.checkpoint_dir.as_ref().map(|d| CheckpointConfig {
        dir: d.clone(),
        interval: a.checkpoint_interval.max(1),
        halt_after: a.halt_after,
    });
    let config = PipelineConfig {
        sge: (!a.no_sge).then_some(SgeOptions {
            max_fill_row_weight: a.max_fill,
            memory_budget_bytes: None,
        }),
        grid: a.grid,
        balance: !a.no_balance,
        grid_config: GridConfig {
            transport: a.transport,
            schedule: a.schedule,
            timeout: Duration::from_millis(a.timeout_ms),
            ..GridConfig::default()
        },
        solve: SolveOptions {
            algorithm: a.algo,
            blocking,
            margin: a.margin,
            retries: a.retries,
            seed: a.seed,
            unit_x: a.unit_x,
            checkpoint,
            progress: progress_sink(log, batch),
        },
        ..PipelineConfig::default()
    };
    let report = run_pipeline(&matrix, &config)?;
    store_vector(matrix.modulus(), &report.kernel, &a.out)?;
    print_solve_report(&report, a.format);
    Ok(0)
}

fn print_solve_report(r: &PipelineReport, format: ReportFormat) {
    if format == ReportFormat::Json {
        println!("{}", serde_json::to_string(r).expect("report serializes"));
        return;
    }
    let nonzero = r.kernel.iter().filter(|x| !x.is_zero()).count();
    let s = &r.solver;
    if format == ReportFormat::Csv {
        println!("stage,seconds");
        for t in &r.timings {
            println!("{},{:.6}", t.stage, t.seconds);
        }
        return;
    }
    println!(
        "KERNEL OK: {nonzero} non-zero entries of {}",
        r.kernel.len()
    );
    println!(
        "matrix {}x{}, reduced {}x{}, padded {}",
        r.original_shape.0, r.original_shape.1, r.reduced_shape.0, r.reduced_shape.1, r.padded_dim
    );
    if let Some(i) = r.imbalance {
        println!("imbalance {i:.4}");
    }
    if let Some(c) = r.empty_column {
        println!(
            "reduced system has no kernel; vector built from column {c}, emptied by elimination"
        );
        return;
    }
    println!("passes {}, solver attempts {}", r.passes, s.attempts);
    println!(
        "krylov products per column {:?} ({} terms)",
        s.krylov_spmvs, s.sequence_terms
    );
    println!(
        "generator degree {}, valuation {}; mksol products {} + {} tail",
        s.generator_degree, s.generator_valuation, s.mksol_horner_spmvs, s.mksol_tail_spmvs
    );
    println!(
        "communication: {} iterations, {} messages, {} bytes",
        r.comm.iterations, r.comm.messages, r.comm.bytes
    );
    println!(
        "phases: krylov {:.3} s, lingen {:.3} s, mksol {:.3} s",
        s.krylov_seconds, s.lingen_seconds, s.mksol_seconds
    );
    for t in &r.timings {
        println!("stage {} {:.3} s", t.stage, t.seconds);
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let m = load(&a.matrix)?;
    let (vm, v) = load_vector(&a.vector)?;
    if vm != *m.modulus() {
        return Err(crate::error::FormatError::ModulusMismatch.into());
    }
    if verify_kernel(&m, &v) {
        println!("KERNEL OK");
        Ok(0)
    } else {
        println!("KERNEL FAIL");
        Ok(1)
    }
}

fn print_rows(rows: &[(&'static str, String)], format: ReportFormat) {
    match format {
        ReportFormat::Text => {
            for (k, v) in rows {
                println!("{k}: {v}");
            }
        }
        ReportFormat::Csv => {
            println!("{}", rows.iter().map(|r| r.0).collect::<Vec<_>>().join(","));
            println!(
                "{}",
                rows.iter()
                    .map(|r| r.1.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
        ReportFormat::Json => {
            let map: serde_json::Map<String, serde_json::Value> = rows
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
                .collect();
            println!("{}", serde_json::Value::Object(map));
        }
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<i32> {
    let cal = CalibrationParams::direct(a.t_compute / 1e3, a.t_comm / 1e3);
    if !cal.is_valid() || a.lingen_hours < 0.0 {
        return Err(Error::Usage("times must be non-negative".into()));
    }
    let e = estimate(a.n_rows, a.blocking, &cal, a.lingen_hours * 3600.0);
    print_rows(&report_rows(&e), a.format);
    Ok(0)
}

#[derive(Serialize)]
struct BenchRecord {
    phase: &'static str,
    iteration: u64,
    batch_iterations: u64,
    spmv_ms: f64,
    comm_bytes: u64,
}

fn cmd_bench(a: &BenchArgs, log: Option<Arc<JsonLog>>, batch: u64) -> Result<i32> {
    let matrix = match &a.input {
        Some(p) => load(p)?,
        None => {
            let ell = a.ell.resolve(a.seed)?;
            let gamma = (a.n / 10).clamp(2, 100);
            let p = profile_ffs()
                .with_n(a.n)
                .with_gamma(gamma)
                .with_dense_cols(0)
                .with_seed(a.seed);
            generate_with_witness(&p, &ell)?.matrix
        }
    };
    let square = if matrix.is_square() {
        matrix
    } else {
        square_up(&matrix, a.seed)
    };
    let perm = if a.no_balance {
        identity_permutation(&square, a.grid)
    } else {
        balance_permutation(&square, a.grid)?
    };
    let bs = split(&square, &perm, a.grid)?;
    let plan = Arc::new(GridPlan::new(bs));
    let config = GridConfig {
        transport: a.transport,
        schedule: a.schedule,
        ..GridConfig::default()
    };
    let mut engine = GridEngine::new(plan.clone(), &config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let m = plan.modulus().clone();
    let u: Vec<_> = (0..plan.dim())
        .map(|_| m.random_residue(&mut rng))
        .collect();
    engine.load(&u)?;
    let start = Instant::now();
    let mut batch_start = Instant::now();
    let mut batch_first = 0u64;
    let batch = batch.max(1);
    // The tap sees the engine's log only afterwards, so bytes per batch use
    // the volume model, which the engine's own log matches exactly.
    let per_iter = plan.volume_model().bytes();
    engine.run_iterations(a.iterations, |t, _| {
        if let Some(l) = &log {
            if t % batch == 0 || t == a.iterations {
                l.record(&BenchRecord {
                    phase: "bench",
                    iteration: t,
                    batch_iterations: t - batch_first,
                    spmv_ms: batch_start.elapsed().as_secs_f64() * 1e3,
                    comm_bytes: per_iter * (t - batch_first),
                });
                batch_first = t;
                batch_start = Instant::now();
            }
        }
        ControlFlow::Continue(())
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    let comm = engine.comm_log().clone();
    let exact = comm
        .iterations
        .iter()
        .all(|c| c.same_volume(&plan.volume_model()));
    let iters = a.iterations.max(1) as f64;
    let cal = calibrate_from_run(
        &comm,
        elapsed,
        a.latency_us * 1e-6,
        a.bandwidth_gbs * 1e9,
        a.grid.nodes(),
    )
    .map_err(|_| Error::Usage("--iterations must be positive".into()))?;
    let target = a.target_rows.unwrap_or(plan.dim() as u64);
    let e = estimate(target, a.blocking, &cal, 0.0);
    let mut rows: Vec<(&'static str, String)> = vec![
        ("dimension", plan.dim().to_string()),
        ("grid", a.grid.to_string()),
        ("iterations", a.iterations.to_string()),
        ("ms_per_iteration", format!("{:.4}", elapsed * 1e3 / iters)),
        (
            "bytes_per_iteration",
            format!("{}", comm.total_bytes() as f64 / iters),
        ),
        (
            "messages_per_iteration",
            format!("{}", comm.total_messages() as f64 / iters),
        ),
        ("model_bytes_per_iteration", per_iter.to_string()),
        ("log_matches_model", exact.to_string()),
        (
            "t_iter_compute_ms",
            format!("{:.4}", cal.t_iter_compute * 1e3),
        ),
        ("t_iter_comm_ms", format!("{:.4}", cal.t_iter_comm * 1e3)),
        (
            "comm_ratio_percent",
            format!(
                "{:.0}",
                comm_ratio(cal.t_iter_compute, cal.t_iter_comm) * 100.0
            ),
        ),
        ("estimate_rows", target.to_string()),
    ];
    rows.extend(report_rows(&e));
    print_rows(&rows, a.format);
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_ell_specs() {
        assert!(matches!(
            "bits:64".parse::<EllSpec>(),
            Ok(EllSpec::Bits(64))
        ));
        assert!(
            matches!("0x3f1".parse::<EllSpec>(), Ok(EllSpec::Value(v)) if v == BigUint::from(1009u32))
        );
        assert!(matches!("1009".parse::<EllSpec>(), Ok(EllSpec::Value(_))));
        assert!("ten".parse::<EllSpec>().is_err());
    }

    #[test]
    fn config_entries_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "grid=2x2\nseed=5\nno_sge=true\nunit_x=false\n").unwrap();
        let c = cfg.to_str().unwrap();
        let out = expand_config(os(&[
            "sldlag", "--config", c, "solve", "--in", "a", "--out", "b", "--seed", "9",
        ]))
        .unwrap();
        assert_eq!(
            out,
            os(&[
                "sldlag",
                "--config",
                c,
                "solve",
                "--grid=2x2",
                "--seed=5",
                "--no-sge",
                "--in",
                "a",
                "--out",
                "b",
                "--seed",
                "9"
            ])
        );
        let Ok(cli) = parse(out) else {
            panic!("expanded arguments do not parse");
        };
        match cli.command {
            Command::Solve(s) => {
                assert_eq!(s.seed, 9);
                assert_eq!(s.grid, GridSpec { r: 2, c: 2 });
                assert!(s.no_sge && !s.unit_x);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn unknown_config_key_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "colour=blue\n").unwrap();
        let err = expand_config(os(&[
            "sldlag",
            "--config",
            cfg.to_str().unwrap(),
            "estimate",
        ]))
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}
