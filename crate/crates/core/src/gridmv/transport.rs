//! Message transports between grid workers.
//!
//! Two implementations share the [`Endpoint`] interface: in-process
//! channels, and loopback TCP where every message crosses the wire encoding.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use byteorder::{LittleEndian, ReadBytesExt};

use crate::balance::GridSpec;
use crate::error::GridError;
use crate::modring::{PrimeModulus, Residue};

pub type Coords = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    PartialSum,
    Fragment,
}

impl MessageKind {
    fn tag(self) -> u8 {
        match self {
            MessageKind::PartialSum => 0,
            MessageKind::Fragment => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(MessageKind::PartialSum),
            1 => Some(MessageKind::Fragment),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub src: Coords,
    pub dst: Coords,
    pub iteration: u64,
    pub payload: Vec<Residue>,
}

/// Wire form: `u8 kind; u16 src_i, src_j, dst_i, dst_j; u64 iteration;
/// u64 payload_len;` then fixed-width residues.
pub fn encode_message(msg: &Message, m: &PrimeModulus, out: &mut Vec<u8>) {
    out.push(msg.kind.tag());
    for x in [msg.src.0, msg.src.1, msg.dst.0, msg.dst.1] {
        out.extend_from_slice(&(x as u16).to_le_bytes());
    }
    out.extend_from_slice(&msg.iteration.to_le_bytes());
    out.extend_from_slice(&(msg.payload.len() as u64).to_le_bytes());
    for v in &msg.payload {
        m.write_residue(v, out);
    }
}

pub fn decode_message(r: &mut dyn Read, m: &PrimeModulus) -> std::io::Result<Message> {
    let bad = |s: String| std::io::Error::new(std::io::ErrorKind::InvalidData, s);
    let kind =
        MessageKind::from_tag(r.read_u8()?).ok_or_else(|| bad("unknown message kind".into()))?;
    let mut c = [0usize; 4];
    for x in c.iter_mut() {
        *x = r.read_u16::<LittleEndian>()? as usize;
    }
    let iteration = r.read_u64::<LittleEndian>()?;
    let len = r.read_u64::<LittleEndian>()? as usize;
    let width = m.residue_bytes();
    let mut buf = vec![0u8; width];
    let mut payload = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        payload.push(m.read_residue(&buf).map_err(|e| bad(e.to_string()))?);
    }
    Ok(Message {
        kind,
        src: (c[0], c[1]),
        dst: (c[2], c[3]),
        iteration,
        payload,
    })
}

/// A worker's connection to every other worker.
pub trait Endpoint: Send {
    fn coords(&self) -> Coords;
    fn send(&mut self, msg: Message) -> Result<(), GridError>;
    fn recv(&mut self, timeout: Duration) -> Result<Message, GridError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    Channel,
    Socket,
}

impl std::str::FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "channel" => Ok(TransportKind::Channel),
            "socket" => Ok(TransportKind::Socket),
            _ => Err(format!(
                "unknown transport {s:?} (expected channel or socket)"
            )),
        }
    }
}

/// Test hook that tampers with selected messages in flight.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// `(iteration, src, dst)` of messages that are silently lost.
    pub drop: Vec<(u64, Coords, Coords)>,
    /// `(iteration, src, dst, new_tag)`: delivered with a wrong iteration tag.
    pub retag: Vec<(u64, Coords, Coords, u64)>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.drop.is_empty() && self.retag.is_empty()
    }

    /// `None` when the message is lost.
    fn apply(&self, mut msg: Message) -> Option<Message> {
        let key = (msg.iteration, msg.src, msg.dst);
        if self.drop.contains(&key) {
            return None;
        }
        if let Some(r) = self.retag.iter().find(|r| (r.0, r.1, r.2) == key) {
            msg.iteration = r.3;
        }
        Some(msg)
    }
}

fn node_index(g: GridSpec, c: Coords) -> usize {
    c.0 * g.c + c.1
}

fn timeout_or_closed(e: RecvTimeoutError, me: Coords) -> GridError {
    match e {
        RecvTimeoutError::Timeout => GridError::Timeout(me.0, me.1),
        RecvTimeoutError::Disconnected => {
            GridError::Transport(format!("inbox of node ({},{}) disconnected", me.0, me.1))
        }
    }
}

struct ChannelEndpoint {
    me: Coords,
    grid: GridSpec,
    inbox: Receiver<Message>,
    peers: Vec<Sender<Message>>,
    faults: Arc<FaultPlan>,
}

impl Endpoint for ChannelEndpoint {
    fn coords(&self) -> Coords {
        self.me
    }

    fn send(&mut self, msg: Message) -> Result<(), GridError> {
        let dst = node_index(self.grid, msg.dst);
        let Some(msg) = self.faults.apply(msg) else {
            return Ok(());
        };
        self.peers[dst]
            .send(msg)
            .map_err(|_| GridError::Transport("peer inbox closed".into()))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message, GridError> {
        self.inbox
            .recv_timeout(timeout)
            .map_err(|e| timeout_or_closed(e, self.me))
    }
}

pub fn channel_endpoints(grid: GridSpec, faults: FaultPlan) -> Vec<Box<dyn Endpoint>> {
    let faults = Arc::new(faults);
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..grid.nodes()).map(|_| mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(k, inbox)| {
            Box::new(ChannelEndpoint {
                me: (k / grid.c, k % grid.c),
                grid,
                inbox,
                peers: senders.clone(),
                faults: faults.clone(),
            }) as Box<dyn Endpoint>
        })
        .collect()
}

struct SocketEndpoint {
    me: Coords,
    grid: GridSpec,
    modulus: PrimeModulus,
    inbox: Receiver<Result<Message, String>>,
    out: HashMap<usize, BufWriter<TcpStream>>,
    faults: Arc<FaultPlan>,
    buf: Vec<u8>,
}

impl Endpoint for SocketEndpoint {
    fn coords(&self) -> Coords {
        self.me
    }

    fn send(&mut self, msg: Message) -> Result<(), GridError> {
        let dst = node_index(self.grid, msg.dst);
        let Some(msg) = self.faults.apply(msg) else {
            return Ok(());
        };
        self.buf.clear();
        encode_message(&msg, &self.modulus, &mut self.buf);
        let stream = self
            .out
            .get_mut(&dst)
            .ok_or_else(|| GridError::Transport(format!("no connection to node {dst}")))?;
        stream.write_all(&self.buf)?;
        stream.flush()?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message, GridError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(Ok(msg)) => Ok(msg),
            Ok(Err(e)) => Err(GridError::Transport(e)),
            Err(e) => Err(timeout_or_closed(e, self.me)),
        }
    }
}

/// Full mesh of loopback TCP connections, one outgoing stream per ordered
/// pair; a reader thread per incoming stream decodes into the node's inbox.
pub fn socket_endpoints(
    grid: GridSpec,
    modulus: &PrimeModulus,
    faults: FaultPlan,
) -> Result<Vec<Box<dyn Endpoint>>, GridError> {
    let nodes = grid.nodes();
    let faults = Arc::new(faults);
    let mut listeners = Vec::with_capacity(nodes);
    let mut addrs = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let l = TcpListener::bind("127.0.0.1:0")?;
        addrs.push(l.local_addr()?);
        listeners.push(l);
    }
    let mut inboxes = Vec::with_capacity(nodes);
    for listener in listeners {
        let (tx, rx) = mpsc::channel::<Result<Message, String>>();
        inboxes.push(rx);
        let m = modulus.clone();
        thread::spawn(move || {
            for _ in 0..nodes.saturating_sub(1) {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                let tx = tx.clone();
                let m = m.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream);
                    loop {
                        match decode_message(&mut reader, &m) {
                            Ok(msg) => {
                                if tx.send(Ok(msg)).is_err() {
                                    return;
                                }
                            }
                            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return,
                            Err(e) => {
                                let _ = tx.send(Err(e.to_string()));
                                return;
                            }
                        }
                    }
                });
            }
        });
    }
    let mut endpoints: Vec<Box<dyn Endpoint>> = Vec::with_capacity(nodes);
    for (k, inbox) in inboxes.into_iter().enumerate() {
        let mut out = HashMap::new();
        for (d, addr) in addrs.iter().enumerate() {
            if d != k {
                let s = TcpStream::connect(addr)?;
                s.set_nodelay(true)?;
                out.insert(d, BufWriter::new(s));
            }
        }
        endpoints.push(Box::new(SocketEndpoint {
            me: (k / grid.c, k % grid.c),
            grid,
            modulus: modulus.clone(),
            inbox,
            out,
            faults: faults.clone(),
            buf: Vec::new(),
        }));
    }
    Ok(endpoints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let msg = Message {
            kind: MessageKind::Fragment,
            src: (1, 0),
            dst: (0, 1),
            iteration: 77,
            payload: vec![m.from_u64(5), m.from_u64(1008)],
        };
        let mut buf = Vec::new();
        encode_message(&msg, &m, &mut buf);
        assert_eq!(buf.len(), 1 + 8 + 8 + 8 + 2 * 2);
        assert_eq!(decode_message(&mut buf.as_slice(), &m).unwrap(), msg);
    }

    #[test]
    fn socket_mesh_delivers() {
        let m = PrimeModulus::from_prime_u64(1009).unwrap();
        let g = GridSpec::new(1, 3).unwrap();
        let mut eps = socket_endpoints(g, &m, FaultPlan::default()).unwrap();
        let msg = Message {
            kind: MessageKind::PartialSum,
            src: (0, 2),
            dst: (0, 0),
            iteration: 3,
            payload: vec![m.from_u64(9)],
        };
        eps[2].send(msg.clone()).unwrap();
        assert_eq!(eps[0].recv(Duration::from_secs(5)).unwrap(), msg);
        assert!(matches!(
            eps[1].recv(Duration::from_millis(20)),
            Err(GridError::Timeout(0, 1))
        ));
    }
}
