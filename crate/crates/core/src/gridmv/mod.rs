//! Distributed SpMV over an `r × c` node grid.
//!
//! The engine iterates `B = P_r·A_pad·P_cᵀ` held as blocks `B_ij`. Node
//! `(i, j)` owns `B_ij` and the `j`-th column fragment `u_j` of the current
//! vector. One iteration:
//!
//! 1. every node computes `B_ij·u_j`; nodes other than the collector of row
//!    `i`, which is `(i, i mod c)`, send it as a `PartialSum`;
//! 2. the collector adds the partials in column order into `v_i`, then sends
//!    each node `(i', j)` the part of `v_i` that falls inside column range `j`;
//! 3. every node assembles its new `u_j` from those pieces.
//!
//! On square grids each piece is a whole fragment and phase 2 is the usual
//! reduce-then-broadcast-down-the-column. On `r ≠ c` grids a row range can
//! straddle column ranges, so pieces are the overlaps of the two partitions.
//!
//! Nodes only see one another through [`Message`]s carried by an
//! [`Endpoint`]; the same code runs on channel and socket transports, in
//! lock-step (`Schedule::Sequential`) or one thread per node.

pub mod transport;

use std::ops::{ControlFlow, Range};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Serialize;

use crate::balance::{BlockSplit, GridSpec};
use crate::error::{GridError, MatrixError};
use crate::modring::{PrimeModulus, Residue};
use crate::spmatrix::SpmvKernel;

pub use transport::{
    channel_endpoints, decode_message, encode_message, socket_endpoints, Coords, Endpoint,
    FaultPlan, Message, MessageKind, TransportKind,
};

/// Static description of a split shared by every node.
#[derive(Debug)]
pub struct GridPlan {
    split: BlockSplit,
    kernels: Vec<Arc<SpmvKernel>>,
    modulus: PrimeModulus,
}

impl GridPlan {
    pub fn new(split: BlockSplit) -> Self {
        let modulus = split.blocks[0].modulus().clone();
        let kernels = split
            .blocks
            .iter()
            .map(|b| Arc::new(SpmvKernel::from_matrix(b)))
            .collect();
        GridPlan {
            split,
            kernels,
            modulus,
        }
    }

    pub fn split(&self) -> &BlockSplit {
        &self.split
    }

    pub fn grid(&self) -> GridSpec {
        self.split.grid
    }

    pub fn modulus(&self) -> &PrimeModulus {
        &self.modulus
    }

    /// Padded dimension `N_p`.
    pub fn dim(&self) -> usize {
        self.split.n_padded
    }

    pub fn block_rows(&self) -> usize {
        self.split.block_rows()
    }

    pub fn block_cols(&self) -> usize {
        self.split.block_cols()
    }

    pub fn collector(&self, i: usize) -> Coords {
        (i, i % self.grid().c)
    }

    pub fn is_collector(&self, at: Coords) -> bool {
        self.collector(at.0) == at
    }

    pub fn row_range(&self, i: usize) -> Range<usize> {
        let br = self.block_rows();
        i * br..(i + 1) * br
    }

    pub fn col_range(&self, j: usize) -> Range<usize> {
        let bc = self.block_cols();
        j * bc..(j + 1) * bc
    }

    /// Global indices in both row range `i` and column range `j`.
    pub fn overlap(&self, i: usize, j: usize) -> Range<usize> {
        let (a, b) = (self.row_range(i), self.col_range(j));
        let lo = a.start.max(b.start);
        let hi = a.end.min(b.end);
        lo..hi.max(lo)
    }

    fn kernel(&self, at: Coords) -> &Arc<SpmvKernel> {
        &self.kernels[at.0 * self.grid().c + at.1]
    }

    /// Exact traffic of one iteration of this plan.
    pub fn volume_model(&self) -> IterationComm {
        comm_volume_model(self.grid(), self.dim(), self.modulus.residue_bytes())
    }
}

/// Traffic of one iteration, counted at the sender.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IterationComm {
    pub iteration: u64,
    pub reduce_msgs: u64,
    pub reduce_bytes: u64,
    pub broadcast_msgs: u64,
    pub broadcast_bytes: u64,
}

impl IterationComm {
    pub fn messages(&self) -> u64 {
        self.reduce_msgs + self.broadcast_msgs
    }

    pub fn bytes(&self) -> u64 {
        self.reduce_bytes + self.broadcast_bytes
    }

    fn absorb(&mut self, o: &IterationComm) {
        self.reduce_msgs += o.reduce_msgs;
        self.reduce_bytes += o.reduce_bytes;
        self.broadcast_msgs += o.broadcast_msgs;
        self.broadcast_bytes += o.broadcast_bytes;
    }

    /// Same counts, ignoring the iteration number.
    pub fn same_volume(&self, o: &IterationComm) -> bool {
        IterationComm {
            iteration: 0,
            ..*self
        } == IterationComm { iteration: 0, ..*o }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommLog {
    pub iterations: Vec<IterationComm>,
}

impl CommLog {
    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.iterations.iter().map(|c| c.bytes()).sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.iterations.iter().map(|c| c.messages()).sum()
    }

    pub fn extend(&mut self, other: &CommLog) {
        self.iterations.extend_from_slice(&other.iterations);
    }
}

/// Predicted traffic of one iteration on grid `g` with padded dimension
/// `n_padded` and `residue_bytes`-wide values.
///
/// Reduction: every non-collector sends one block-row partial. Broadcast:
/// every node receives its whole column fragment except what its own row's
/// collector already holds locally.
pub fn comm_volume_model(g: GridSpec, n_padded: usize, residue_bytes: usize) -> IterationComm {
    let (r, c) = (g.r as u64, g.c as u64);
    let (br, bc) = (n_padded / g.r, n_padded / g.c);
    let b = residue_bytes as u64;
    let mut broadcast_msgs = 0u64;
    let mut local = 0u64;
    for i in 0..g.r {
        let rows = i * br..(i + 1) * br;
        for j in 0..g.c {
            let lo = rows.start.max(j * bc);
            let hi = rows.end.min((j + 1) * bc);
            if hi > lo {
                broadcast_msgs += r;
                if j == i % g.c {
                    broadcast_msgs -= 1;
                    local += (hi - lo) as u64;
                }
            }
        }
    }
    IterationComm {
        iteration: 0,
        reduce_msgs: r * (c - 1),
        reduce_bytes: r * (c - 1) * br as u64 * b,
        broadcast_msgs,
        broadcast_bytes: (r * n_padded as u64 - local) * b,
    }
}

/// `(c−1)·fragment_bytes` per grid row plus `(r−1)·fragment_bytes` per grid
/// column. Agrees with [`comm_volume_model`] on square grids.
pub fn comm_volume_square(g: GridSpec, fragment_bytes: u64) -> u64 {
    let (r, c) = (g.r as u64, g.c as u64);
    r * (c - 1) * fragment_bytes + c * (r - 1) * fragment_bytes
}

/// Per-node data.
#[derive(Clone, Debug)]
pub struct WorkerState {
    pub coords: Coords,
    pub block: Arc<SpmvKernel>,
    /// `u_j`, length `block_cols`.
    pub in_fragment: Vec<Residue>,
    /// `v_i` on collectors after an iteration, empty elsewhere.
    pub out_fragment: Vec<Residue>,
    /// Partial product `B_ij·u_j`.
    pub scratch: Vec<Residue>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// All nodes step through each phase in turn on the calling thread.
    Sequential,
    /// One persistent thread per node.
    Threaded,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sequential" => Ok(Schedule::Sequential),
            "threaded" => Ok(Schedule::Threaded),
            _ => Err(format!(
                "unknown schedule {s:?} (expected sequential or threaded)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub transport: TransportKind,
    pub schedule: Schedule,
    /// How long a node waits for an expected message.
    pub timeout: Duration,
    pub faults: FaultPlan,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            transport: TransportKind::Channel,
            schedule: Schedule::Sequential,
            timeout: Duration::from_secs(30),
            faults: FaultPlan::default(),
        }
    }
}

struct Node {
    state: WorkerState,
    ep: Box<dyn Endpoint>,
    plan: Arc<GridPlan>,
    stash: Vec<Message>,
    timeout: Duration,
    comm: IterationComm,
}

impl Node {
    fn protocol(&self, detail: String) -> GridError {
        GridError::Protocol {
            node_i: self.state.coords.0,
            node_j: self.state.coords.1,
            detail,
        }
    }

    fn send(
        &mut self,
        kind: MessageKind,
        dst: Coords,
        t: u64,
        payload: Vec<Residue>,
    ) -> Result<(), GridError> {
        let bytes = (payload.len() * self.plan.modulus.residue_bytes()) as u64;
        match kind {
            MessageKind::PartialSum => {
                self.comm.reduce_msgs += 1;
                self.comm.reduce_bytes += bytes;
            }
            MessageKind::Fragment => {
                self.comm.broadcast_msgs += 1;
                self.comm.broadcast_bytes += bytes;
            }
        }
        self.ep.send(Message {
            kind,
            src: self.state.coords,
            dst,
            iteration: t,
            payload,
        })
    }

    /// Next message of `kind` from `src` for iteration `t`. Messages for this
    /// iteration that arrive early are held back; anything else is an error.
    fn expect(
        &mut self,
        kind: MessageKind,
        src: Coords,
        t: u64,
        len: usize,
    ) -> Result<Vec<Residue>, GridError> {
        let found = self
            .stash
            .iter()
            .position(|m| m.kind == kind && m.src == src);
        let msg = match found {
            Some(k) => self.stash.swap_remove(k),
            None => loop {
                let msg = self.ep.recv(self.timeout)?;
                if msg.dst != self.state.coords {
                    return Err(self.protocol(format!("message addressed to {:?}", msg.dst)));
                }
                if msg.iteration != t {
                    return Err(self.protocol(format!(
                        "{:?} from {:?} tagged iteration {} during iteration {t}",
                        msg.kind, msg.src, msg.iteration
                    )));
                }
                if msg.kind == kind && msg.src == src {
                    break msg;
                }
                if self
                    .stash
                    .iter()
                    .any(|m| m.kind == msg.kind && m.src == msg.src)
                {
                    return Err(
                        self.protocol(format!("duplicate {:?} from {:?}", msg.kind, msg.src))
                    );
                }
                self.stash.push(msg);
            },
        };
        if msg.payload.len() != len {
            return Err(self.protocol(format!(
                "{:?} from {:?} carries {} values, expected {len}",
                kind,
                src,
                msg.payload.len()
            )));
        }
        Ok(msg.payload)
    }

    fn phase1(&mut self, t: u64) -> Result<(), GridError> {
        self.comm = IterationComm {
            iteration: t,
            ..Default::default()
        };
        self.state.scratch = self.state.block.apply(&self.state.in_fragment)?;
        let me = self.state.coords;
        let collector = self.plan.collector(me.0);
        if collector != me {
            let partial = self.state.scratch.clone();
            self.send(MessageKind::PartialSum, collector, t, partial)?;
        }
        Ok(())
    }

    fn phase2(&mut self, t: u64) -> Result<(), GridError> {
        let me = self.state.coords;
        if !self.plan.is_collector(me) {
            self.state.out_fragment.clear();
            return Ok(());
        }
        let g = self.plan.grid();
        let m = self.plan.modulus.clone();
        let br = self.plan.block_rows();
        let mut v = vec![m.zero(); br];
        for j in 0..g.c {
            let partial = if j == me.1 {
                std::mem::take(&mut self.state.scratch)
            } else {
                self.expect(MessageKind::PartialSum, (me.0, j), t, br)?
            };
            for (a, b) in v.iter_mut().zip(&partial) {
                m.add_assign(a, b);
            }
        }
        let base = self.plan.row_range(me.0).start;
        for j in 0..g.c {
            let ov = self.plan.overlap(me.0, j);
            if ov.is_empty() {
                continue;
            }
            let piece = &v[ov.start - base..ov.end - base];
            for i2 in 0..g.r {
                if (i2, j) != me {
                    self.send(MessageKind::Fragment, (i2, j), t, piece.to_vec())?;
                }
            }
        }
        self.state.out_fragment = v;
        Ok(())
    }

    fn phase3(&mut self, t: u64) -> Result<(), GridError> {
        let me = self.state.coords;
        let g = self.plan.grid();
        let base = self.plan.col_range(me.1).start;
        let mut u = std::mem::take(&mut self.state.in_fragment);
        for i in 0..g.r {
            let ov = self.plan.overlap(i, me.1);
            if ov.is_empty() {
                continue;
            }
            let src = self.plan.collector(i);
            if src == me {
                let rb = self.plan.row_range(i).start;
                u[ov.start - base..ov.end - base]
                    .clone_from_slice(&self.state.out_fragment[ov.start - rb..ov.end - rb]);
            } else {
                let piece = self.expect(MessageKind::Fragment, src, t, ov.len())?;
                u[ov.start - base..ov.end - base].clone_from_slice(&piece);
            }
        }
        self.state.in_fragment = u;
        if !self.stash.is_empty() {
            let extra = &self.stash[0];
            return Err(self.protocol(format!("unexpected {:?} from {:?}", extra.kind, extra.src)));
        }
        Ok(())
    }

    fn iterate(&mut self, t: u64) -> Result<(), GridError> {
        self.phase1(t)?;
        self.phase2(t)?;
        self.phase3(t)
    }
}

enum Ctrl {
    Load(Vec<Residue>),
    Iterate(u64),
    Snapshot,
    Stop,
}

enum Reply {
    Loaded,
    Done {
        out: Option<Vec<Residue>>,
        comm: IterationComm,
    },
    Fragment(Vec<Residue>),
}

struct Threads {
    ctrl: Vec<Sender<Ctrl>>,
    replies: Receiver<(usize, Result<Reply, GridError>)>,
    handles: Vec<JoinHandle<()>>,
}

impl Drop for Threads {
    fn drop(&mut self) {
        for c in &self.ctrl {
            let _ = c.send(Ctrl::Stop);
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn worker_loop(
    mut node: Node,
    k: usize,
    ctrl: Receiver<Ctrl>,
    replies: Sender<(usize, Result<Reply, GridError>)>,
) {
    while let Ok(cmd) = ctrl.recv() {
        let reply = match cmd {
            Ctrl::Stop => return,
            Ctrl::Load(u) => {
                node.state.in_fragment = u;
                node.stash.clear();
                Ok(Reply::Loaded)
            }
            Ctrl::Snapshot => Ok(Reply::Fragment(node.state.in_fragment.clone())),
            Ctrl::Iterate(t) => node.iterate(t).map(|()| Reply::Done {
                out: node
                    .plan
                    .is_collector(node.state.coords)
                    .then(|| node.state.out_fragment.clone()),
                comm: node.comm,
            }),
        };
        if replies.send((k, reply)).is_err() {
            return;
        }
    }
}

enum Backend {
    Sequential(Vec<Node>),
    Threaded(Threads),
}

/// A running grid: per-node state plus the transport between nodes.
pub struct GridEngine {
    plan: Arc<GridPlan>,
    timeout: Duration,
    backend: Backend,
    iteration: u64,
    log: CommLog,
    poisoned: bool,
}

impl GridEngine {
    pub fn new(plan: Arc<GridPlan>, config: &GridConfig) -> Result<Self, GridError> {
        let g = plan.grid();
        let endpoints = match config.transport {
            TransportKind::Channel => channel_endpoints(g, config.faults.clone()),
            TransportKind::Socket => socket_endpoints(g, &plan.modulus, config.faults.clone())?,
        };
        let bc = plan.block_cols();
        let zero = plan.modulus.zero();
        let nodes: Vec<Node> = endpoints
            .into_iter()
            .map(|ep| {
                let at = ep.coords();
                Node {
                    state: WorkerState {
                        coords: at,
                        block: plan.kernel(at).clone(),
                        in_fragment: vec![zero.clone(); bc],
                        out_fragment: Vec::new(),
                        scratch: Vec::new(),
                    },
                    ep,
                    plan: plan.clone(),
                    stash: Vec::new(),
                    timeout: config.timeout,
                    comm: IterationComm::default(),
                }
            })
            .collect();
        let backend = match config.schedule {
            Schedule::Sequential => Backend::Sequential(nodes),
            Schedule::Threaded => {
                let (rtx, replies) = mpsc::channel();
                let mut ctrl = Vec::with_capacity(nodes.len());
                let mut handles = Vec::with_capacity(nodes.len());
                for (k, node) in nodes.into_iter().enumerate() {
                    let (ctx, crx) = mpsc::channel();
                    ctrl.push(ctx);
                    let rtx = rtx.clone();
                    handles.push(
                        thread::Builder::new()
                            .name(format!(
                                "grid-{}-{}",
                                node.state.coords.0, node.state.coords.1
                            ))
                            .spawn(move || worker_loop(node, k, crx, rtx))?,
                    );
                }
                Backend::Threaded(Threads {
                    ctrl,
                    replies,
                    handles,
                })
            }
        };
        Ok(GridEngine {
            plan,
            timeout: config.timeout,
            backend,
            iteration: 0,
            log: CommLog::default(),
            poisoned: false,
        })
    }

    pub fn plan(&self) -> &Arc<GridPlan> {
        &self.plan
    }

    /// Completed iterations since construction.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn comm_log(&self) -> &CommLog {
        &self.log
    }

    fn check_usable(&self) -> Result<(), GridError> {
        if self.poisoned {
            Err(GridError::Transport(
                "engine stopped after an earlier failure".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Distributes `u` (length `N_p`, in permuted column order).
    pub fn load(&mut self, u: &[Residue]) -> Result<(), GridError> {
        self.check_usable()?;
        let n = self.plan.dim();
        if u.len() != n {
            return Err(MatrixError::DimensionMismatch {
                expected: n,
                got: u.len(),
            }
            .into());
        }
        let plan = self.plan.clone();
        match &mut self.backend {
            Backend::Sequential(nodes) => {
                for node in nodes.iter_mut() {
                    node.state.in_fragment = u[plan.col_range(node.state.coords.1)].to_vec();
                    node.stash.clear();
                }
            }
            Backend::Threaded(th) => {
                let c = plan.grid().c;
                for (k, tx) in th.ctrl.iter().enumerate() {
                    tx.send(Ctrl::Load(u[plan.col_range(k % c)].to_vec()))
                        .map_err(|_| GridError::Transport("worker exited".into()))?;
                }
                self.collect(|_, _| Ok(()))?;
            }
        }
        Ok(())
    }

    /// Current vector, read from the nodes of grid row 0.
    pub fn vector(&mut self) -> Result<Vec<Residue>, GridError> {
        self.check_usable()?;
        let c = self.plan.grid().c;
        match &mut self.backend {
            Backend::Sequential(nodes) => Ok(nodes[..c]
                .iter()
                .flat_map(|n| n.state.in_fragment.iter().cloned())
                .collect()),
            Backend::Threaded(th) => {
                for tx in &th.ctrl[..c] {
                    tx.send(Ctrl::Snapshot)
                        .map_err(|_| GridError::Transport("worker exited".into()))?;
                }
                let mut parts: Vec<Vec<Residue>> = vec![Vec::new(); c];
                self.collect_from(c, |k, reply| {
                    if let Reply::Fragment(f) = reply {
                        parts[k] = f;
                    }
                    Ok(())
                })?;
                Ok(parts.concat())
            }
        }
    }

    fn collect(
        &mut self,
        f: impl FnMut(usize, Reply) -> Result<(), GridError>,
    ) -> Result<(), GridError> {
        let n = self.plan.grid().nodes();
        self.collect_from(n, f)
    }

    /// Waits for `count` replies, keeping the most informative error.
    fn collect_from(
        &mut self,
        count: usize,
        mut f: impl FnMut(usize, Reply) -> Result<(), GridError>,
    ) -> Result<(), GridError> {
        let Backend::Threaded(th) = &self.backend else {
            return Ok(());
        };
        let patience = self.timeout * 4 + Duration::from_secs(1);
        let mut first: Option<GridError> = None;
        for _ in 0..count {
            let err = match th.replies.recv_timeout(patience) {
                Ok((k, Ok(reply))) => f(k, reply).err(),
                Ok((_, Err(e))) => Some(e),
                Err(_) => Some(GridError::Transport("worker stopped responding".into())),
            };
            if let Some(e) = err {
                let replace = matches!(
                    (&first, &e),
                    (None, _) | (Some(GridError::Timeout(..)), GridError::Protocol { .. })
                );
                if replace {
                    first = Some(e);
                }
            }
        }
        match first {
            Some(e) => {
                self.poisoned = true;
                Err(e)
            }
            None => Ok(()),
        }
    }

    /// One iteration; returns the new vector `B·u`.
    pub fn iterate(&mut self) -> Result<Vec<Residue>, GridError> {
        self.check_usable()?;
        let t = self.iteration;
        let g = self.plan.grid();
        let mut comm = IterationComm {
            iteration: t,
            ..Default::default()
        };
        let mut rows: Vec<Vec<Residue>> = vec![Vec::new(); g.r];
        match &mut self.backend {
            Backend::Sequential(nodes) => {
                let res = (|| {
                    for n in nodes.iter_mut() {
                        n.phase1(t)?;
                    }
                    for n in nodes.iter_mut() {
                        n.phase2(t)?;
                    }
                    for n in nodes.iter_mut() {
                        n.phase3(t)?;
                    }
                    Ok(())
                })();
                if let Err(e) = res {
                    self.poisoned = true;
                    return Err(e);
                }
                for n in nodes.iter() {
                    comm.absorb(&n.comm);
                    if self.plan.is_collector(n.state.coords) {
                        rows[n.state.coords.0] = n.state.out_fragment.clone();
                    }
                }
            }
            Backend::Threaded(th) => {
                for tx in &th.ctrl {
                    tx.send(Ctrl::Iterate(t))
                        .map_err(|_| GridError::Transport("worker exited".into()))?;
                }
                let c = g.c;
                self.collect(|k, reply| {
                    if let Reply::Done { out, comm: nc } = reply {
                        comm.absorb(&nc);
                        if let Some(v) = out {
                            rows[k / c] = v;
                        }
                    }
                    Ok(())
                })?;
            }
        }
        self.iteration += 1;
        self.log.iterations.push(comm);
        Ok(rows.concat())
    }

    /// Runs `k` iterations from the loaded vector. `tap` sees the completed
    /// iteration count and the new vector; `Break` stops early with
    /// [`GridError::Interrupted`].
    pub fn run_iterations<F>(&mut self, k: u64, mut tap: F) -> Result<Vec<Residue>, GridError>
    where
        F: FnMut(u64, &[Residue]) -> ControlFlow<()>,
    {
        if k == 0 {
            return self.vector();
        }
        let mut v = Vec::new();
        for step in 1..=k {
            v = self.iterate()?;
            if tap(step, &v).is_break() {
                return Err(GridError::Interrupted);
            }
        }
        Ok(v)
    }
}

/// Reusable handle: each run builds a fresh engine over the shared plan.
#[derive(Clone, Debug)]
pub struct GridOperator {
    plan: Arc<GridPlan>,
    config: GridConfig,
}

impl GridOperator {
    pub fn new(split: BlockSplit, config: GridConfig) -> Self {
        GridOperator {
            plan: Arc::new(GridPlan::new(split)),
            config,
        }
    }

    pub fn plan(&self) -> &Arc<GridPlan> {
        &self.plan
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn engine(&self) -> Result<GridEngine, GridError> {
        GridEngine::new(self.plan.clone(), &self.config)
    }

    /// `k` iterations from `start`; returns the final vector and the log.
    pub fn run<F>(
        &self,
        start: &[Residue],
        k: u64,
        tap: F,
    ) -> Result<(Vec<Residue>, CommLog), GridError>
    where
        F: FnMut(u64, &[Residue]) -> ControlFlow<()>,
    {
        let mut e = self.engine()?;
        e.load(start)?;
        let v = e.run_iterations(k, tap)?;
        Ok((v, e.log))
    }

    pub fn apply(&self, u: &[Residue]) -> Result<Vec<Residue>, GridError> {
        Ok(self.run(u, 1, |_, _| ControlFlow::Continue(()))?.0)
    }
}

/// One grid product `B·u` on a fresh engine.
pub fn grid_spmv(
    split: BlockSplit,
    u: &[Residue],
    config: &GridConfig,
) -> Result<(Vec<Residue>, CommLog), GridError> {
    GridOperator::new(split, config.clone()).run(u, 1, |_, _| ControlFlow::Continue(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::{balance_permutation, split};
    use crate::spmatrix::{spmv_sequential, MatrixBuilder, SparseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(
        m: &PrimeModulus,
        n: usize,
        per_row: usize,
        rng: &mut ChaCha8Rng,
    ) -> SparseMatrix {
        let mut b = MatrixBuilder::new(m, n);
        for _ in 0..n {
            let row: Vec<(usize, i64)> = (0..per_row)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(-5i64..=5)))
                .collect();
            b.push_small(&row).unwrap();
        }
        b.build().unwrap()
    }

    fn setup(r: usize, c: usize, n: usize, seed: u64) -> (BlockSplit, Vec<Residue>) {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&m, n, 4, &mut rng);
        let g = GridSpec::new(r, c).unwrap();
        let p = balance_permutation(&a, g).unwrap();
        let bs = split(&a, &p, g).unwrap();
        let u = (0..bs.n_padded)
            .map(|_| m.random_residue(&mut rng))
            .collect();
        (bs, u)
    }

    #[test]
    fn matches_sequential_on_several_shapes() {
        for (r, c) in [(1, 1), (2, 2), (2, 1), (1, 2), (4, 4), (2, 4), (3, 2)] {
            let (bs, u) = setup(r, c, 64, (r * 10 + c) as u64);
            let expect = spmv_sequential(&bs.assemble(), &u).unwrap();
            let model = comm_volume_model(bs.grid, bs.n_padded, 2);
            let (v, log) = grid_spmv(bs, &u, &GridConfig::default()).unwrap();
            assert_eq!(v, expect, "grid {r}x{c}");
            assert!(log.iterations[0].same_volume(&model), "grid {r}x{c}");
        }
    }

    #[test]
    fn square_model_matches_literal_formula() {
        let g = GridSpec::new(2, 2).unwrap();
        assert_eq!(comm_volume_square(g, 100), 400);
        assert_eq!(comm_volume_square(GridSpec::new(1, 1).unwrap(), 100), 0);
        for k in 1..6 {
            let g = GridSpec::new(k, k).unwrap();
            let np = 60 * k;
            let fb = (np / k) as u64 * 8;
            assert_eq!(
                comm_volume_model(g, np, 8).bytes(),
                comm_volume_square(g, fb)
            );
        }
    }

    #[test]
    fn collectors_hold_row_sums_after_reduction() {
        let (bs, u) = setup(2, 2, 32, 5);
        let n0 = bs.block_cols();
        let b00 = spmv_sequential(bs.block(0, 0), &u[..n0]).unwrap();
        let b01 = spmv_sequential(bs.block(0, 1), &u[n0..]).unwrap();
        let m = bs.blocks[0].modulus().clone();
        let v0: Vec<Residue> = b00.iter().zip(&b01).map(|(a, b)| m.add(a, b)).collect();
        let (v, _) = grid_spmv(bs, &u, &GridConfig::default()).unwrap();
        assert_eq!(&v[..n0], &v0[..]);
    }

    #[test]
    fn threaded_and_socket_agree() {
        let (bs, u) = setup(2, 3, 60, 9);
        let plan = Arc::new(GridPlan::new(bs));
        let mut results = Vec::new();
        for (transport, schedule) in [
            (TransportKind::Channel, Schedule::Sequential),
            (TransportKind::Channel, Schedule::Threaded),
            (TransportKind::Socket, Schedule::Sequential),
            (TransportKind::Socket, Schedule::Threaded),
        ] {
            let cfg = GridConfig {
                transport,
                schedule,
                ..Default::default()
            };
            let mut e = GridEngine::new(plan.clone(), &cfg).unwrap();
            e.load(&u).unwrap();
            let v = e
                .run_iterations(3, |_, _| ControlFlow::Continue(()))
                .unwrap();
            assert_eq!(e.vector().unwrap(), v);
            results.push((v, e.comm_log().clone()));
        }
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_iterations_return_input() {
        let (bs, u) = setup(2, 2, 16, 1);
        let op = GridOperator::new(bs, GridConfig::default());
        let (v, log) = op.run(&u, 0, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(v, u);
        assert!(log.is_empty());
    }

    #[test]
    fn retagged_message_is_protocol_error() {
        let (bs, u) = setup(2, 2, 16, 2);
        let cfg = GridConfig {
            faults: FaultPlan {
                retag: vec![(0, (0, 1), (0, 0), 7)],
                ..Default::default()
            },
            ..Default::default()
        };
        let err = grid_spmv(bs, &u, &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                GridError::Protocol {
                    node_i: 0,
                    node_j: 0,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn lost_message_times_out() {
        let (bs, u) = setup(2, 2, 16, 3);
        let cfg = GridConfig {
            timeout: Duration::from_millis(50),
            faults: FaultPlan {
                drop: vec![(0, (1, 1), (0, 1))],
                ..Default::default()
            },
            ..Default::default()
        };
        let err = grid_spmv(bs, &u, &cfg).unwrap_err();
        assert!(matches!(err, GridError::Timeout(0, 1)), "{err}");
    }
}
