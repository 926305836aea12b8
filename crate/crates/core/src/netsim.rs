//! Deterministic, seeded discrete-event network simulator.
//!
//! Hosts, switches and NF nodes are joined by links with finite rate,
//! propagation delay, independent per-datagram loss, and drop-tail
//! queues. Three endpoint families run on top: the selective-reliability
//! custom transport, a fire-and-forget UDP-like sender, and a
//! teaching-grade fully reliable TCP-like sender whose window evolution
//! is delegated to the pluggable congestion-control subsystem.
//!
//! Time is integer microseconds. Events execute in (time, ordinal)
//! order where ordinals follow insertion order, so a full trace is a
//! pure function of (topology, workload, seed).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cc::{CcConnection, SchemeRegistry, SwapMarker};
use crate::nfs::{DeployedChain, NfAction, PacketProcessor};
use crate::proto::{
    decode_header, flow_stats, Decoded, FlowStats, ReceiverState, SenderConfig, SenderState,
};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event queue is empty")]
    EmptyQueue,
    #[error("event at {at_us} us is in the past (clock {now_us} us)")]
    ClockViolation { now_us: u64, at_us: u64 },
    #[error("no route between {0} and {1}")]
    DisconnectedTopology(String, String),
    #[error("unknown host `{0}`")]
    UnknownHost(String),
    #[error("chain protocol does not match the endpoint family of flow {0}")]
    EndpointMismatch(usize),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("congestion control: {0}")]
    Cc(#[from] crate::cc::CcError),
    #[error("transport: {0}")]
    Proto(#[from] crate::proto::ProtoError),
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Host,
    NfNode,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNode {
    pub id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLink {
    pub a: String,
    pub b: String,
    pub rate_bps: f64,
    pub delay_us: u64,
    /// Independent Bernoulli loss probability per datagram.
    pub loss: f64,
    /// Drop-tail queue capacity, packets.
    pub queue_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTopology {
    pub nodes: Vec<SimNode>,
    pub links: Vec<SimLink>,
}

impl SimTopology {
    pub fn validate(&self) -> Result<(), SimError> {
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        if ids.len() != self.nodes.len() {
            return Err(SimError::InvalidTopology("duplicate node id".into()));
        }
        for l in &self.links {
            if !ids.contains(l.a.as_str()) || !ids.contains(l.b.as_str()) {
                return Err(SimError::InvalidTopology(format!(
                    "link {}-{} references unknown node",
                    l.a, l.b
                )));
            }
            if l.rate_bps <= 0.0 {
                return Err(SimError::InvalidTopology("non-positive link rate".into()));
            }
            if !(0.0..1.0).contains(&l.loss) {
                return Err(SimError::InvalidTopology(format!(
                    "loss {} outside [0,1)",
                    l.loss
                )));
            }
            if l.queue_cap == 0 {
                return Err(SimError::InvalidTopology("zero queue capacity".into()));
            }
        }
        Ok(())
    }

    /// A linear chain `h_src - s1 - .. - sN - h_dst`, every link with
    /// the same parameters. Handy for experiments and tests.
    pub fn linear(switches: usize, rate_bps: f64, delay_us: u64, loss: f64, queue_cap: usize) -> Self {
        let mut nodes = vec![SimNode {
            id: "src".into(),
            kind: NodeKind::Host,
        }];
        for i in 0..switches {
            nodes.push(SimNode {
                id: format!("s{}", i + 1),
                kind: NodeKind::NfNode,
            });
        }
        nodes.push(SimNode {
            id: "dst".into(),
            kind: NodeKind::Host,
        });
        let links = nodes
            .windows(2)
            .map(|w| SimLink {
                a: w[0].id.clone(),
                b: w[1].id.clone(),
                rate_bps,
                delay_us,
                loss,
                queue_cap,
            })
            .collect();
        SimTopology { nodes, links }
    }
}

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum FlowKind {
    /// The custom selective-reliability transport. All messages are
    /// submitted up front; the reliable flag follows a deterministic
    /// pattern hitting `reliable_ratio` exactly over the stream.
    Custom {
        messages: u32,
        payload_len: usize,
        reliable_ratio: f64,
        config: SenderConfig,
        ack_every: u32,
    },
    /// Fire-and-forget datagrams at a constant rate.
    Udp {
        messages: u32,
        payload_len: usize,
        rate_bps: f64,
    },
    /// Fully reliable, window-governed transfer. `packets: None` keeps
    /// the flow backlogged for the whole run.
    Tcp {
        packets: Option<u32>,
        payload_len: usize,
        scheme: String,
    },
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub src: String,
    pub dst: String,
    pub start_us: u64,
    pub kind: FlowKind,
    /// Whether this flow's packets pass through installed NF processors.
    pub use_chain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BgPattern {
    Constant,
    /// On for `duty` of every `period_us`, silent otherwise.
    OnOff { period_us: u64, duty: f64 },
}

#[derive(Debug, Clone)]
pub struct BgSpec {
    pub src: String,
    pub dst: String,
    pub rate_bps: f64,
    pub payload_len: usize,
    pub pattern: BgPattern,
}

// ---------------------------------------------------------------------------
// Packets and events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum SimPacket {
    /// A real datagram (custom transport); visible to NF processors.
    Raw(Vec<u8>),
    TcpData {
        seq: u32,
        len: usize,
        ts_us: u64,
    },
    TcpAck {
        ack: u32,
        len: usize,
        echo_ts_us: u64,
    },
    Udp {
        len: usize,
    },
    Bg {
        bg: usize,
        len: usize,
    },
}

impl SimPacket {
    fn wire_len(&self) -> usize {
        match self {
            SimPacket::Raw(b) => b.len(),
            SimPacket::TcpData { len, .. }
            | SimPacket::TcpAck { len, .. }
            | SimPacket::Udp { len }
            | SimPacket::Bg { len, .. } => *len,
        }
    }
}

#[derive(Debug)]
enum Event {
    FlowTick { flow: usize },
    Arrive { route: usize, hop: usize, packet: SimPacket },
    NfPoll { node: usize },
    BgEmit { bg: usize },
    SwapScheme { flow: usize, scheme: String },
    Sample,
    Probe { id: u64 },
}

struct Scheduled {
    time: u64,
    ordinal: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.ordinal == other.ordinal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.ordinal).cmp(&(other.time, other.ordinal))
    }
}

// ---------------------------------------------------------------------------
// Runtime state
// ---------------------------------------------------------------------------

struct Route {
    /// Node indices from source to sink.
    nodes: Vec<usize>,
    /// (link index, a-to-b direction) per hop.
    links: Vec<(usize, bool)>,
    flow: Option<usize>,
    forward: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub offered: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_queue: u64,
}

impl LinkCounters {
    pub fn in_flight_at_end(&self) -> u64 {
        self.offered - self.delivered - self.dropped_loss - self.dropped_queue
    }
}

struct CustomRt {
    sender: SenderState,
    receiver: ReceiverState,
    aborted: bool,
}

struct UdpRt {
    total: u32,
    sent: u32,
    payload_len: usize,
    interval_us: u64,
    next_emit_us: u64,
    delivered: u64,
}

struct TcpRt {
    conn: CcConnection,
    payload_len: usize,
    total: Option<u32>,
    next_seq: u32,
    highest_acked: u32,
    dup_acks: u32,
    recover: u32,
    rto_backoff: u32,
    last_progress_us: u64,
    rcv_expected: u32,
    rcv_ooo: BTreeSet<u32>,
    delivered: u64,
    retransmissions: u64,
    first_sent_us: Option<u64>,
    completed_us: Option<u64>,
    swap_cwnd_pairs: Vec<(f64, f64)>,
}

enum FlowRt {
    Custom(CustomRt),
    Udp(UdpRt),
    Tcp(Box<TcpRt>),
}

struct Flow {
    rt: FlowRt,
    fwd_route: usize,
    rev_route: usize,
    use_chain: bool,
    // Cumulative counters for per-second trace rows.
    offered_pkts: u64,
    link_drops: u64,
    delivered_pkts: u64,
    delivered_bytes: u64,
}

struct BgSource {
    route: usize,
    payload_len: usize,
    interval_us: u64,
    pattern: BgPattern,
    emitted: u64,
    delivered: u64,
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: u64,
    pub throughput_bps: f64,
    pub rtt_ms: f64,
    pub loss_pct: f64,
    pub cwnd_pkts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub kind: String,
    pub offered_pkts: u64,
    pub delivered_pkts: u64,
    pub delivered_bytes: u64,
    pub link_drops: u64,
    pub delivery_ratio: f64,
    pub flow_completion_time_s: Option<f64>,
    pub retransmissions: u64,
    pub custom: Option<FlowStats>,
    pub scheme_swaps: Vec<SwapMarker>,
    /// (cwnd immediately before, immediately after) each scheme swap.
    pub swap_cwnd_pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub duration_s: f64,
    pub rows: BTreeMap<usize, Vec<TraceRow>>,
    pub flows: BTreeMap<usize, FlowSummary>,
    pub links: Vec<LinkCounters>,
}

impl TraceMetrics {
    /// CSV rendering of one flow's per-second trace.
    pub fn flow_csv(&self, flow: usize) -> String {
        let mut out = String::from("t_s,throughput_bps,rtt_ms,loss_pct,cwnd_pkts\n");
        if let Some(rows) = self.rows.get(&flow) {
            for r in rows {
                out.push_str(&format!(
                    "{},{:.0},{:.3},{:.3},{:.3}\n",
                    r.t_s, r.throughput_bps, r.rtt_ms, r.loss_pct, r.cwnd_pkts
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace metrics serialize")
    }
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

pub struct Simulator {
    topo: SimTopology,
    node_index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    pub registry: SchemeRegistry,
    rng: ChaCha12Rng,
    now_us: u64,
    next_ordinal: u64,
    heap: BinaryHeap<Reverse<Scheduled>>,
    routes: Vec<Route>,
    flows: Vec<Flow>,
    bgs: Vec<BgSource>,
    /// Processor pipelines per node, in chain order.
    processors: Vec<Vec<Box<dyn PacketProcessor>>>,
    chain_flow: Option<usize>,
    busy_until: Vec<[u64; 2]>,
    link_counters: Vec<LinkCounters>,
    // Per-second sampling state.
    rows: BTreeMap<usize, Vec<TraceRow>>,
    last_sample: Vec<(u64, u64, u64)>, // (delivered_bytes, offered_pkts, link_drops)
    probe_log: Vec<(u64, u64)>,
    tick_us: u64,
}

const TICK_US: u64 = 1_000;
/// Reference packet size for queue-delay bounding, bytes.
const REF_PKT: f64 = 1500.0;
const TCP_HDR: usize = 40;

impl Simulator {
    pub fn new(topo: SimTopology, seed: u64) -> Result<Self, SimError> {
        topo.validate()?;
        let node_index: HashMap<String, usize> = topo
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let mut adjacency = vec![Vec::new(); topo.nodes.len()];
        for (li, l) in topo.links.iter().enumerate() {
            adjacency[node_index[&l.a]].push(li);
            adjacency[node_index[&l.b]].push(li);
        }
        let n_links = topo.links.len();
        let n_nodes = topo.nodes.len();
        Ok(Simulator {
            topo,
            node_index,
            adjacency,
            registry: SchemeRegistry::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
            now_us: 0,
            next_ordinal: 0,
            heap: BinaryHeap::new(),
            routes: Vec::new(),
            flows: Vec::new(),
            bgs: Vec::new(),
            processors: (0..n_nodes).map(|_| Vec::new()).collect(),
            chain_flow: None,
            busy_until: vec![[0, 0]; n_links],
            link_counters: vec![LinkCounters::default(); n_links],
            rows: BTreeMap::new(),
            last_sample: Vec::new(),
            probe_log: Vec::new(),
            tick_us: TICK_US,
        })
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    fn schedule(&mut self, at_us: u64, event: Event) -> Result<(), SimError> {
        if at_us < self.now_us {
            return Err(SimError::ClockViolation {
                now_us: self.now_us,
                at_us,
            });
        }
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        self.heap.push(Reverse(Scheduled {
            time: at_us,
            ordinal,
            event,
        }));
        Ok(())
    }

    /// Schedule a no-op marker event; it records (fire time, id) in the
    /// probe log. Exists for observing event-loop ordering.
    pub fn schedule_probe(&mut self, at_us: u64, id: u64) -> Result<(), SimError> {
        self.schedule(at_us, Event::Probe { id })
    }

    pub fn probe_log(&self) -> &[(u64, u64)] {
        &self.probe_log
    }

    /// Shortest path by propagation delay, lexicographic tie-break.
    fn route_nodes(&self, src: usize, dst: usize) -> Option<Vec<usize>> {
        #[derive(PartialEq, Eq, PartialOrd, Ord)]
        struct Entry(u64, Vec<usize>);
        let mut heap = BinaryHeap::new();
        let mut settled = vec![false; self.topo.nodes.len()];
        heap.push(Reverse(Entry(0, vec![src])));
        while let Some(Reverse(Entry(d, path))) = heap.pop() {
            let here = *path.last().unwrap();
            if here == dst {
                return Some(path);
            }
            if settled[here] {
                continue;
            }
            settled[here] = true;
            for &li in &self.adjacency[here] {
                let l = &self.topo.links[li];
                let next = if self.node_index[&l.a] == here {
                    self.node_index[&l.b]
                } else {
                    self.node_index[&l.a]
                };
                if settled[next] {
                    continue;
                }
                let mut p = path.clone();
                p.push(next);
                heap.push(Reverse(Entry(d + l.delay_us, p)));
            }
        }
        None
    }

    fn build_route(&mut self, src: &str, dst: &str, flow: Option<usize>, forward: bool) -> Result<usize, SimError> {
        let s = *self
            .node_index
            .get(src)
            .ok_or_else(|| SimError::UnknownHost(src.to_string()))?;
        let d = *self
            .node_index
            .get(dst)
            .ok_or_else(|| SimError::UnknownHost(dst.to_string()))?;
        let nodes = self
            .route_nodes(s, d)
            .ok_or_else(|| SimError::DisconnectedTopology(src.to_string(), dst.to_string()))?;
        let links = nodes
            .windows(2)
            .map(|w| {
                let li = self.adjacency[w[0]]
                    .iter()
                    .copied()
                    .find(|&li| {
                        let l = &self.topo.links[li];
                        let (a, b) = (self.node_index[&l.a], self.node_index[&l.b]);
                        (a == w[0] && b == w[1]) || (a == w[1] && b == w[0])
                    })
                    .expect("adjacent nodes share a link");
                let a_to_b = self.node_index[&self.topo.links[li].a] == w[0];
                (li, a_to_b)
            })
            .collect();
        self.routes.push(Route {
            nodes,
            links,
            flow,
            forward,
        });
        Ok(self.routes.len() - 1)
    }

    pub fn add_flow(&mut self, spec: FlowSpec) -> Result<usize, SimError> {
        let flow_id = self.flows.len();
        let fwd = self.build_route(&spec.src, &spec.dst, Some(flow_id), true)?;
        let rev = self.build_route(&spec.dst, &spec.src, Some(flow_id), false)?;
        let rt = match &spec.kind {
            FlowKind::Custom {
                messages,
                payload_len,
                reliable_ratio,
                config,
                ack_every,
            } => {
                let mut sender = SenderState::new(flow_id as u16, config.clone());
                let payload = vec![0xA5u8; *payload_len];
                let mut marks = 0u64;
                for i in 0..*messages {
                    let want = ((i + 1) as f64 * reliable_ratio).floor() as u64;
                    let reliable = want > marks;
                    if reliable {
                        marks = want;
                    }
                    sender.submit(&payload, reliable)?;
                }
                sender.close();
                FlowRt::Custom(CustomRt {
                    sender,
                    receiver: ReceiverState::new(*ack_every),
                    aborted: false,
                })
            }
            FlowKind::Udp {
                messages,
                payload_len,
                rate_bps,
            } => FlowRt::Udp(UdpRt {
                total: *messages,
                sent: 0,
                payload_len: *payload_len,
                interval_us: ((*payload_len as f64 * 8.0 / rate_bps) * 1e6) as u64,
                next_emit_us: spec.start_us,
                delivered: 0,
            }),
            FlowKind::Tcp {
                packets,
                payload_len,
                scheme,
            } => {
                let scheme = self.registry.get(scheme)?;
                FlowRt::Tcp(Box::new(TcpRt {
                    conn: CcConnection::new(scheme),
                    payload_len: *payload_len,
                    total: *packets,
                    next_seq: 1,
                    highest_acked: 0,
                    dup_acks: 0,
                    recover: 0,
                    rto_backoff: 0,
                    last_progress_us: spec.start_us,
                    rcv_expected: 1,
                    rcv_ooo: BTreeSet::new(),
                    delivered: 0,
                    retransmissions: 0,
                    first_sent_us: None,
                    completed_us: None,
                    swap_cwnd_pairs: Vec::new(),
                }))
            }
        };
        self.flows.push(Flow {
            rt,
            fwd_route: fwd,
            rev_route: rev,
            use_chain: spec.use_chain,
            offered_pkts: 0,
            link_drops: 0,
            delivered_pkts: 0,
            delivered_bytes: 0,
        });
        self.last_sample.push((0, 0, 0));
        self.schedule(spec.start_us, Event::FlowTick { flow: flow_id })?;
        Ok(flow_id)
    }

    /// Install a composed NF chain. The chain serves exactly one flow;
    /// its protocol must match that flow's endpoint family.
    pub fn install_chain(&mut self, chain: DeployedChain, flow: usize) -> Result<(), SimError> {
        use crate::nfs::ProtocolKind;
        let matches = match (&chain.protocol, &self.flows[flow].rt) {
            (ProtocolKind::Custom, FlowRt::Custom(_)) => true,
            (ProtocolKind::LegacyUdp, FlowRt::Udp(_)) => true,
            (ProtocolKind::LegacyTcp, FlowRt::Tcp(_)) => true,
            _ => false,
        };
        if !matches {
            return Err(SimError::EndpointMismatch(flow));
        }
        let mut poll_nodes = Vec::new();
        for (node, proc_) in chain.stages {
            let ni = *self
                .node_index
                .get(&node)
                .ok_or_else(|| SimError::UnknownHost(node.clone()))?;
            self.processors[ni].push(proc_);
            poll_nodes.push(ni);
        }
        self.chain_flow = Some(flow);
        for ni in poll_nodes {
            self.schedule(self.now_us + self.tick_us, Event::NfPoll { node: ni })?;
        }
        Ok(())
    }

    pub fn attach_background_traffic(&mut self, spec: BgSpec) -> Result<usize, SimError> {
        let route = self.build_route(&spec.src, &spec.dst, None, true)?;
        let bg_id = self.bgs.len();
        let interval_us = if spec.rate_bps > 0.0 {
            ((spec.payload_len as f64 * 8.0 / spec.rate_bps) * 1e6).max(1.0) as u64
        } else {
            0
        };
        self.bgs.push(BgSource {
            route,
            payload_len: spec.payload_len,
            interval_us,
            pattern: spec.pattern,
            emitted: 0,
            delivered: 0,
        });
        if interval_us > 0 {
            self.schedule(self.now_us, Event::BgEmit { bg: bg_id })?;
        }
        Ok(bg_id)
    }

    pub fn bg_counters(&self, bg: usize) -> (u64, u64) {
        (self.bgs[bg].emitted, self.bgs[bg].delivered)
    }

    /// Swap the congestion-control scheme of a TCP-like flow mid-run.
    pub fn schedule_cc_swap(&mut self, flow: usize, at_us: u64, scheme: &str) -> Result<(), SimError> {
        self.schedule(
            at_us,
            Event::SwapScheme {
                flow,
                scheme: scheme.to_string(),
            },
        )
    }

    /// Transmit a packet over the link leaving `route.nodes[hop]`, or
    /// deliver it if `hop` is the final node.
    fn forward_from(&mut self, route: usize, hop: usize, packet: SimPacket) -> Result<(), SimError> {
        if hop + 1 >= self.routes[route].nodes.len() {
            self.deliver(route, packet);
            return Ok(());
        }
        let (li, a_to_b) = self.routes[route].links[hop];
        let l = &self.topo.links[li];
        let dir = a_to_b as usize;
        let len = packet.wire_len();
        let tx_us = ((len as f64 * 8.0 / l.rate_bps) * 1e6).max(1.0) as u64;
        let start = self.busy_until[li][dir].max(self.now_us);
        let wait = start - self.now_us;
        let cap_us = (l.queue_cap as f64 * REF_PKT * 8.0 / l.rate_bps * 1e6) as u64;
        self.link_counters[li].offered += 1;
        if wait > cap_us {
            self.link_counters[li].dropped_queue += 1;
            if let Some(f) = self.routes[route].flow {
                self.flows[f].link_drops += 1;
            }
            return Ok(());
        }
        self.busy_until[li][dir] = start + tx_us;
        let loss = l.loss;
        if loss > 0.0 && self.rng.gen::<f64>() < loss {
            self.link_counters[li].dropped_loss += 1;
            if let Some(f) = self.routes[route].flow {
                self.flows[f].link_drops += 1;
            }
            return Ok(());
        }
        let arrive_at = start + tx_us + self.topo.links[li].delay_us;
        self.schedule(
            arrive_at,
            Event::Arrive {
                route,
                hop: hop + 1,
                packet,
            },
        )
    }

    fn inject(&mut self, route: usize, packet: SimPacket) -> Result<(), SimError> {
        if let Some(f) = self.routes[route].flow {
            if self.routes[route].forward {
                self.flows[f].offered_pkts += 1;
            }
        }
        self.forward_from(route, 0, packet)
    }

    fn deliver(&mut self, route: usize, packet: SimPacket) {
        let now = self.now_us;
        match (self.routes[route].flow, packet) {
            (None, SimPacket::Bg { bg, .. }) => {
                self.bgs[bg].delivered += 1;
            }
            (Some(f), packet) => {
                let forward = self.routes[route].forward;
                let mut to_send: Vec<(usize, SimPacket)> = Vec::new();
                {
                    let flow = &mut self.flows[f];
                    let fwd_route = flow.fwd_route;
                    let rev_route = flow.rev_route;
                    match (&mut flow.rt, packet) {
                        (FlowRt::Custom(rt), SimPacket::Raw(bytes)) => {
                            if forward {
                                let out = rt.receiver.on_datagram(&bytes, now);
                                let delivered_payload: u64 =
                                    out.deliveries.iter().map(|d| d.payload.len() as u64).sum();
                                flow.delivered_pkts += out.deliveries.len() as u64;
                                flow.delivered_bytes += delivered_payload;
                                if let Some(ack) = out.ack {
                                    to_send.push((rev_route, SimPacket::Raw(ack)));
                                }
                            } else if let Ok(Decoded::Header { header, payload }) =
                                decode_header(&bytes)
                            {
                                if header.is_ack() {
                                    rt.sender.on_ack(
                                        header.ack_seq,
                                        header.seq,
                                        &payload,
                                        header.timestamp_us,
                                        now,
                                    );
                                }
                            }
                            let _ = fwd_route;
                        }
                        (FlowRt::Udp(rt), SimPacket::Udp { len }) => {
                            rt.delivered += 1;
                            flow.delivered_pkts += 1;
                            flow.delivered_bytes += len as u64;
                        }
                        (FlowRt::Tcp(rt), SimPacket::TcpData { seq, len, ts_us }) => {
                            // Receiver side: cumulative ack with
                            // duplicate acks on out-of-order arrivals.
                            if seq == rt.rcv_expected {
                                rt.rcv_expected += 1;
                                rt.delivered += 1;
                                flow.delivered_pkts += 1;
                                flow.delivered_bytes += (len - TCP_HDR) as u64;
                                while rt.rcv_ooo.remove(&rt.rcv_expected) {
                                    rt.rcv_expected += 1;
                                    rt.delivered += 1;
                                    flow.delivered_pkts += 1;
                                    flow.delivered_bytes += (len - TCP_HDR) as u64;
                                }
                            } else if seq > rt.rcv_expected {
                                rt.rcv_ooo.insert(seq);
                            }
                            to_send.push((
                                rev_route,
                                SimPacket::TcpAck {
                                    ack: rt.rcv_expected - 1,
                                    len: TCP_HDR,
                                    echo_ts_us: ts_us,
                                },
                            ));
                        }
                        (FlowRt::Tcp(rt), SimPacket::TcpAck { ack, echo_ts_us, .. }) => {
                            if ack > rt.highest_acked {
                                let newly = (ack - rt.highest_acked) as u64;
                                let rtt = now.saturating_sub(echo_ts_us);
                                rt.conn.on_ack(newly, rtt, now);
                                if rt.conn.state.in_recovery {
                                    if ack >= rt.recover {
                                        rt.conn.exit_recovery();
                                    } else {
                                        // Partial ack: the next hole is known
                                        // lost; resend it without shrinking the
                                        // window again.
                                        rt.retransmissions += 1;
                                        to_send.push((
                                            fwd_route,
                                            SimPacket::TcpData {
                                                seq: ack + 1,
                                                len: rt.payload_len + TCP_HDR,
                                                ts_us: now,
                                            },
                                        ));
                                    }
                                }
                                rt.highest_acked = ack;
                                rt.dup_acks = 0;
                                rt.rto_backoff = 0;
                                rt.last_progress_us = now;
                                if rt.total == Some(rt.highest_acked) && rt.completed_us.is_none()
                                {
                                    rt.completed_us = Some(now);
                                }
                            } else if rt.next_seq > rt.highest_acked + 1 {
                                rt.dup_acks += 1;
                                if rt.dup_acks == 3 {
                                    // Fast retransmit.
                                    rt.conn.on_loss(now);
                                    rt.recover = rt.next_seq - 1;
                                    rt.retransmissions += 1;
                                    to_send.push((
                                        fwd_route,
                                        SimPacket::TcpData {
                                            seq: rt.highest_acked + 1,
                                            len: rt.payload_len + TCP_HDR,
                                            ts_us: now,
                                        },
                                    ));
                                }
                            }
                            // Window may have opened: send fresh data.
                            Self::tcp_fill_window(rt, fwd_route, now, &mut to_send, &mut flow.offered_pkts);
                        }
                        _ => {}
                    }
                }
                for (r, p) in to_send {
                    let _ = self.forward_from(r, 0, p);
                }
            }
            _ => {}
        }
    }

    fn tcp_fill_window(
        rt: &mut TcpRt,
        fwd_route: usize,
        now: u64,
        to_send: &mut Vec<(usize, SimPacket)>,
        offered: &mut u64,
    ) {
        loop {
            let inflight = (rt.next_seq - 1 - rt.highest_acked) as f64;
            if inflight >= rt.conn.state.cwnd.floor() {
                break;
            }
            if let Some(total) = rt.total {
                if rt.next_seq > total {
                    break;
                }
            }
            if rt.first_sent_us.is_none() {
                rt.first_sent_us = Some(now);
            }
            to_send.push((
                fwd_route,
                SimPacket::TcpData {
                    seq: rt.next_seq,
                    len: rt.payload_len + TCP_HDR,
                    ts_us: now,
                },
            ));
            *offered += 1;
            rt.next_seq += 1;
        }
    }

    fn tcp_rto_us(rt: &TcpRt) -> u64 {
        let base = (rt.conn.state.srtt_us.max(1) * 2).max(200_000);
        (base << rt.rto_backoff.min(4)).min(3_000_000)
    }

    fn handle_tick(&mut self, flow_id: usize) -> Result<(), SimError> {
        let now = self.now_us;
        let mut to_send: Vec<(usize, SimPacket)> = Vec::new();
        let mut reschedule = true;
        {
            let flow = &mut self.flows[flow_id];
            let fwd = flow.fwd_route;
            match &mut flow.rt {
                FlowRt::Custom(rt) => {
                    if rt.aborted {
                        reschedule = false;
                    } else {
                        match rt.sender.on_tick(now) {
                            Ok(datagrams) => {
                                for d in datagrams {
                                    flow.offered_pkts += 1;
                                    to_send.push((fwd, SimPacket::Raw(d)));
                                }
                                if rt.sender.is_complete() {
                                    reschedule = false;
                                }
                            }
                            Err(_) => {
                                rt.aborted = true;
                                reschedule = false;
                            }
                        }
                    }
                }
                FlowRt::Udp(rt) => {
                    while rt.sent < rt.total && rt.next_emit_us <= now {
                        rt.sent += 1;
                        rt.next_emit_us += rt.interval_us;
                        flow.offered_pkts += 1;
                        to_send.push((
                            fwd,
                            SimPacket::Udp {
                                len: rt.payload_len,
                            },
                        ));
                    }
                    if rt.sent >= rt.total {
                        reschedule = false;
                    }
                }
                FlowRt::Tcp(rt) => {
                    let inflight = rt.next_seq - 1 - rt.highest_acked;
                    if inflight > 0 && now.saturating_sub(rt.last_progress_us) > Self::tcp_rto_us(rt) {
                        // Retransmission timeout.
                        rt.conn.on_loss(now);
                        rt.recover = rt.next_seq - 1;
                        rt.rto_backoff += 1;
                        rt.retransmissions += 1;
                        rt.last_progress_us = now;
                        to_send.push((
                            fwd,
                            SimPacket::TcpData {
                                seq: rt.highest_acked + 1,
                                len: rt.payload_len + TCP_HDR,
                                ts_us: now,
                            },
                        ));
                    }
                    Self::tcp_fill_window(rt, fwd, now, &mut to_send, &mut flow.offered_pkts);
                    if rt.completed_us.is_some() {
                        reschedule = false;
                    }
                }
            }
        }
        for (r, p) in to_send {
            self.forward_from(r, 0, p)?;
        }
        if reschedule {
            self.schedule(now + self.tick_us, Event::FlowTick { flow: flow_id })?;
        }
        Ok(())
    }

    fn handle_arrive(&mut self, route: usize, hop: usize, packet: SimPacket) -> Result<(), SimError> {
        self.link_counters[self.routes[route].links[hop - 1].0].delivered += 1;
        let node = self.routes[route].nodes[hop];
        let chain_applies = self.routes[route]
            .flow
            .map(|f| self.flows[f].use_chain)
            .unwrap_or(false)
            && !self.processors[node].is_empty();
        if chain_applies {
            if let SimPacket::Raw(bytes) = packet {
                let now = self.now_us;
                let mut current = vec![bytes];
                for proc_ in &mut self.processors[node] {
                    let mut next = Vec::new();
                    for b in current {
                        for action in proc_.on_packet(&b, now) {
                            match action {
                                NfAction::Forward(out) | NfAction::Emit(out) => next.push(out),
                                NfAction::Drop => {
                                    if let Some(f) = self.routes[route].flow {
                                        self.flows[f].link_drops += 1;
                                    }
                                }
                            }
                        }
                    }
                    current = next;
                }
                for b in current {
                    self.forward_from(route, hop, SimPacket::Raw(b))?;
                }
                return Ok(());
            }
            self.forward_from(route, hop, packet)?;
            return Ok(());
        }
        if hop + 1 >= self.routes[route].nodes.len() {
            self.deliver(route, packet);
            Ok(())
        } else {
            self.forward_from(route, hop, packet)
        }
    }

    fn handle_nf_poll(&mut self, node: usize) -> Result<(), SimError> {
        let now = self.now_us;
        let mut emitted: Vec<Vec<u8>> = Vec::new();
        for proc_ in &mut self.processors[node] {
            for action in proc_.poll(now) {
                match action {
                    NfAction::Forward(b) | NfAction::Emit(b) => emitted.push(b),
                    NfAction::Drop => {}
                }
            }
        }
        if let Some(flow) = self.chain_flow {
            for bytes in emitted {
                // Queued packets lost their hop context; recover the
                // direction from the header (acks travel the reverse
                // route) and resume from this node's position on it.
                let is_ack = matches!(
                    decode_header(&bytes),
                    Ok(Decoded::Header { header, .. }) if header.is_ack()
                );
                let route = if is_ack {
                    self.flows[flow].rev_route
                } else {
                    self.flows[flow].fwd_route
                };
                if let Some(pos) = self.routes[route].nodes.iter().position(|&n| n == node) {
                    self.forward_from(route, pos, SimPacket::Raw(bytes))?;
                }
            }
        }
        self.schedule(now + self.tick_us, Event::NfPoll { node })
    }

    fn handle_bg_emit(&mut self, bg: usize) -> Result<(), SimError> {
        let now = self.now_us;
        let (route, len, interval, on) = {
            let b = &self.bgs[bg];
            let on = match &b.pattern {
                BgPattern::Constant => true,
                BgPattern::OnOff { period_us, duty } => {
                    ((now % period_us) as f64) < duty * *period_us as f64
                }
            };
            (b.route, b.payload_len, b.interval_us, on)
        };
        if on {
            self.bgs[bg].emitted += 1;
            self.inject(route, SimPacket::Bg { bg, len })?;
        }
        self.schedule(now + interval, Event::BgEmit { bg })
    }

    fn handle_sample(&mut self, duration_us: u64) -> Result<(), SimError> {
        let t_s = self.now_us / 1_000_000;
        for (i, flow) in self.flows.iter().enumerate() {
            let (prev_bytes, prev_off, prev_drop) = self.last_sample[i];
            let d_bytes = flow.delivered_bytes - prev_bytes;
            let d_off = flow.offered_pkts - prev_off;
            let d_drop = flow.link_drops - prev_drop;
            let (rtt_ms, cwnd) = match &flow.rt {
                FlowRt::Custom(rt) => (
                    rt.sender.srtt_us().unwrap_or(0) as f64 / 1000.0,
                    0.0,
                ),
                FlowRt::Udp(_) => (0.0, 0.0),
                FlowRt::Tcp(rt) => (
                    rt.conn.state.srtt_us as f64 / 1000.0,
                    rt.conn.state.cwnd,
                ),
            };
            self.rows.entry(i).or_default().push(TraceRow {
                t_s,
                throughput_bps: d_bytes as f64 * 8.0,
                rtt_ms,
                loss_pct: if d_off == 0 {
                    0.0
                } else {
                    100.0 * d_drop as f64 / d_off as f64
                },
                cwnd_pkts: cwnd,
            });
            self.last_sample[i] = (flow.delivered_bytes, flow.offered_pkts, flow.link_drops);
        }
        let next = self.now_us + 1_000_000;
        if next <= duration_us {
            self.schedule(next, Event::Sample)?;
        }
        Ok(())
    }

    /// Process exactly one event.
    pub fn step(&mut self) -> Result<(), SimError> {
        let Some(Reverse(s)) = self.heap.pop() else {
            return Err(SimError::EmptyQueue);
        };
        debug_assert!(s.time >= self.now_us, "clock must be monotone");
        self.now_us = s.time;
        match s.event {
            Event::FlowTick { flow } => self.handle_tick(flow),
            Event::Arrive { route, hop, packet } => self.handle_arrive(route, hop, packet),
            Event::NfPoll { node } => self.handle_nf_poll(node),
            Event::BgEmit { bg } => self.handle_bg_emit(bg),
            Event::SwapScheme { flow, scheme } => {
                if let FlowRt::Tcp(rt) = &mut self.flows[flow].rt {
                    let before = rt.conn.state.cwnd;
                    rt.conn.swap_scheme(&self.registry, &scheme, self.now_us)?;
                    rt.swap_cwnd_pairs.push((before, rt.conn.state.cwnd));
                }
                Ok(())
            }
            Event::Sample => Ok(()), // handled by run(), which re-dispatches
            Event::Probe { id } => {
                self.probe_log.push((self.now_us, id));
                Ok(())
            }
        }
    }

    /// Run to `duration_us` and assemble traces. Identical inputs and
    /// seed yield byte-identical metrics.
    pub fn run(&mut self, duration_us: u64) -> Result<TraceMetrics, SimError> {
        self.run_controlled(duration_us, usize::MAX, u64::MAX, |_, _, _, _| {})
    }

    /// Like [`run`], but pause at every multiple of `interval_us` and
    /// hand the window-governed `flow`'s live connection to
    /// `controller`, which may tune its state or swap the active scheme
    /// in place. Swaps made by the controller are recorded in the
    /// flow's `swap_cwnd_pairs`.
    ///
    /// [`run`]: Simulator::run
    pub fn run_controlled<F>(
        &mut self,
        duration_us: u64,
        flow: usize,
        interval_us: u64,
        mut controller: F,
    ) -> Result<TraceMetrics, SimError>
    where
        F: FnMut(u64, &mut SchemeRegistry, &mut CcConnection, &[TraceRow]),
    {
        self.schedule(1_000_000.min(duration_us), Event::Sample)?;
        let mut next_ctl = interval_us;
        loop {
            let next_time = self.heap.peek().map(|Reverse(s)| s.time);
            if next_ctl <= duration_us && next_time.is_none_or(|t| t >= next_ctl) {
                self.now_us = self.now_us.max(next_ctl);
                if let Some(f) = self.flows.get_mut(flow) {
                    if let FlowRt::Tcp(rt) = &mut f.rt {
                        let rows: &[TraceRow] =
                            self.rows.get(&flow).map(|v| v.as_slice()).unwrap_or(&[]);
                        let swaps_before = rt.conn.swap_markers.len();
                        let cwnd_before = rt.conn.state.cwnd;
                        controller(self.now_us, &mut self.registry, &mut rt.conn, rows);
                        if rt.conn.swap_markers.len() > swaps_before {
                            rt.swap_cwnd_pairs.push((cwnd_before, rt.conn.state.cwnd));
                        }
                    }
                }
                next_ctl = next_ctl.saturating_add(interval_us);
                continue;
            }
            let Some(t) = next_time else {
                break;
            };
            if t > duration_us {
                break;
            }
            // Sample events need `duration_us`, so intercept them here.
            let is_sample = matches!(
                self.heap.peek(),
                Some(Reverse(Scheduled {
                    event: Event::Sample,
                    ..
                }))
            );
            if is_sample {
                let Some(Reverse(s)) = self.heap.pop() else {
                    unreachable!()
                };
                self.now_us = s.time;
                self.handle_sample(duration_us)?;
            } else {
                self.step()?;
            }
        }
        self.now_us = duration_us;
        let mut flows = BTreeMap::new();
        for (i, flow) in self.flows.iter().enumerate() {
            let summary = match &flow.rt {
                FlowRt::Custom(rt) => {
                    let custom = flow_stats(&rt.receiver, &rt.sender).ok();
                    FlowSummary {
                        kind: "custom".into(),
                        offered_pkts: flow.offered_pkts,
                        delivered_pkts: flow.delivered_pkts,
                        delivered_bytes: flow.delivered_bytes,
                        link_drops: flow.link_drops,
                        delivery_ratio: ratio(flow.delivered_pkts, rt.sender.offered_reliable + rt.sender.offered_best_effort),
                        flow_completion_time_s: custom
                            .as_ref()
                            .map(|c| c.flow_completion_time_s),
                        retransmissions: rt.sender.retransmissions,
                        custom,
                        scheme_swaps: Vec::new(),
                        swap_cwnd_pairs: Vec::new(),
                    }
                }
                FlowRt::Udp(rt) => FlowSummary {
                    kind: "udp".into(),
                    offered_pkts: flow.offered_pkts,
                    delivered_pkts: flow.delivered_pkts,
                    delivered_bytes: flow.delivered_bytes,
                    link_drops: flow.link_drops,
                    delivery_ratio: ratio(rt.delivered, rt.sent as u64),
                    flow_completion_time_s: None,
                    retransmissions: 0,
                    custom: None,
                    scheme_swaps: Vec::new(),
                    swap_cwnd_pairs: Vec::new(),
                },
                FlowRt::Tcp(rt) => FlowSummary {
                    kind: "tcp".into(),
                    offered_pkts: flow.offered_pkts,
                    delivered_pkts: flow.delivered_pkts,
                    delivered_bytes: flow.delivered_bytes,
                    link_drops: flow.link_drops,
                    delivery_ratio: ratio(rt.delivered, rt.total.map(u64::from).unwrap_or(flow.offered_pkts)),
                    flow_completion_time_s: match (rt.first_sent_us, rt.completed_us) {
                        (Some(a), Some(b)) => Some((b - a) as f64 / 1e6),
                        _ => None,
                    },
                    retransmissions: rt.retransmissions,
                    custom: None,
                    scheme_swaps: rt.conn.swap_markers.clone(),
                    swap_cwnd_pairs: rt.swap_cwnd_pairs.clone(),
                },
            };
            flows.insert(i, summary);
        }
        Ok(TraceMetrics {
            duration_s: duration_us as f64 / 1e6,
            rows: self.rows.clone(),
            flows,
            links: self.link_counters.clone(),
        })
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}
