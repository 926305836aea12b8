//! Network-function framework: catalog descriptors, in-path packet
//! processors, and chain composition.
//!
//! Three concrete behaviors ship with the catalog — an unconditional
//! forwarder, a two-class priority queue keyed on the reliability flag,
//! and a transport assistant that caches reliable payloads and serves
//! retransmissions from the cache — plus a pass-through security
//! placeholder.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::{decode_header, Decoded};

#[derive(Debug, Error, PartialEq)]
pub enum NfError {
    #[error("duplicate NF name `{0}` in catalog")]
    DuplicateName(String),
    #[error("malformed catalog entry: {0}")]
    MalformedEntry(String),
    #[error("no behavior registered for NF `{0}`")]
    UnknownBehavior(String),
    #[error("invalid behavior config: {0}")]
    InvalidConfig(String),
    #[error("plan references NF `{0}` not present in the catalog")]
    UnknownNf(String),
    #[error("placement node `{0}` is not on the selected path")]
    PlacementOffPath(String),
    #[error("NF `{0}` expects packet format `{1}` incompatible with the plan protocol")]
    ProtocolMismatch(String, String),
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Packet format tags an NF can consume or produce.
pub const FORMAT_LEGACY_UDP: &str = "legacy-udp";
pub const FORMAT_LLMPROTO: &str = "llmproto";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfDescriptor {
    pub name: String,
    pub role: String,
    pub input_formats: Vec<String>,
    pub output_formats: Vec<String>,
    pub platform: String,
    pub cpu_units: u32,
    pub memory_mb: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    entries: Vec<NfDescriptor>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&NfDescriptor> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entries(&self) -> &[NfDescriptor] {
        &self.entries
    }

    /// Prompt-embeddable rendering of the catalog.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "[nf]\nname={}\nrole={}\ninput={}\noutput={}\nplatform={}\ncpu_units={}\nmemory_mb={}\n\n",
                e.name,
                e.role,
                e.input_formats.join(","),
                e.output_formats.join(","),
                e.platform,
                e.cpu_units,
                e.memory_mb
            ));
        }
        out
    }
}

/// Parse the structured key-value catalog text (one `[nf]` block per
/// descriptor).
pub fn load_catalog(text: &str) -> Result<Catalog, NfError> {
    let mut entries: Vec<NfDescriptor> = Vec::new();
    let mut fields: Option<BTreeMap<String, String>> = None;
    let flush = |fields: &mut Option<BTreeMap<String, String>>,
                     entries: &mut Vec<NfDescriptor>|
     -> Result<(), NfError> {
        let Some(f) = fields.take() else {
            return Ok(());
        };
        let get = |name: &str| -> Result<&String, NfError> {
            f.get(name)
                .ok_or_else(|| NfError::MalformedEntry(format!("missing `{name}`")))
        };
        let formats = |name: &str| -> Result<Vec<String>, NfError> {
            let tags: Vec<String> = get(name)?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            for t in &tags {
                if t != FORMAT_LEGACY_UDP && t != FORMAT_LLMPROTO {
                    return Err(NfError::MalformedEntry(format!(
                        "unknown packet format `{t}`"
                    )));
                }
            }
            Ok(tags)
        };
        let uint = |name: &str| -> Result<u32, NfError> {
            get(name)?
                .parse()
                .map_err(|_| NfError::MalformedEntry(format!("`{name}` is not an integer")))
        };
        let d = NfDescriptor {
            name: get("name")?.clone(),
            role: get("role")?.clone(),
            input_formats: formats("input")?,
            output_formats: formats("output")?,
            platform: get("platform")?.clone(),
            cpu_units: uint("cpu_units")?,
            memory_mb: uint("memory_mb")?,
        };
        if d.cpu_units == 0 || d.memory_mb == 0 {
            return Err(NfError::MalformedEntry(format!(
                "`{}` must declare positive resource demands",
                d.name
            )));
        }
        if entries.iter().any(|e| e.name == d.name) {
            return Err(NfError::DuplicateName(d.name));
        }
        entries.push(d);
        Ok(())
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[nf]" {
            flush(&mut fields, &mut entries)?;
            fields = Some(BTreeMap::new());
        } else if let Some((k, v)) = line.split_once('=') {
            let Some(f) = fields.as_mut() else {
                return Err(NfError::MalformedEntry(format!(
                    "field `{line}` outside a block"
                )));
            };
            f.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(NfError::MalformedEntry(format!("unparseable `{line}`")));
        }
    }
    flush(&mut fields, &mut entries)?;
    Ok(Catalog { entries })
}

/// The four shipped descriptors.
pub fn default_catalog() -> Catalog {
    load_catalog(DEFAULT_CATALOG_TEXT).expect("built-in catalog is well-formed")
}

pub const DEFAULT_CATALOG_TEXT: &str = "\
[nf]
name=QoS Enforcer
role=Two-class priority scheduling with per-class rate policing; reliability-flagged packets preempt best-effort
input=legacy-udp,llmproto
output=legacy-udp,llmproto
platform=linux-x86_64
cpu_units=2
memory_mb=128

[nf]
name=Packet Forwarder
role=Unconditional stateless forwarding
input=legacy-udp,llmproto
output=legacy-udp,llmproto
platform=linux-x86_64
cpu_units=1
memory_mb=64

[nf]
name=Transport Assistant
role=Caches reliability-flagged payloads in-path and serves retransmissions from the cache
input=llmproto
output=llmproto
platform=linux-x86_64
cpu_units=2
memory_mb=256

[nf]
name=Traffic Inspector
role=Security placeholder; passes traffic through unchanged
input=legacy-udp,llmproto
output=legacy-udp,llmproto
platform=linux-x86_64
cpu_units=1
memory_mb=128
";

// ---------------------------------------------------------------------------
// Packet processors
// ---------------------------------------------------------------------------

/// What a processor wants done with bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum NfAction {
    /// Send these bytes to the next hop.
    Forward(Vec<u8>),
    Drop,
    /// Inject a new datagram toward the next hop.
    Emit(Vec<u8>),
}

/// An in-path packet processor driven by the simulator's event loop.
/// No internal concurrency: calls arrive strictly in event order.
pub trait PacketProcessor: Send {
    fn name(&self) -> &str;
    /// React to a packet arriving at this NF.
    fn on_packet(&mut self, packet: &[u8], now_us: u64) -> Vec<NfAction>;
    /// Periodic service opportunity (e.g. draining queues under a rate
    /// budget). Default: nothing buffered.
    fn poll(&mut self, _now_us: u64) -> Vec<NfAction> {
        Vec::new()
    }
}

/// Tunables for the built-in behaviors; unused fields are ignored by
/// behaviors that do not need them.
#[derive(Debug, Clone)]
pub struct BehaviorConfig {
    /// Rate budget for reliability-flagged traffic, bytes/s.
    pub high_rate_bps: f64,
    /// Rate budget for best-effort traffic, bytes/s.
    pub low_rate_bps: f64,
    /// Per-class queue capacity, packets.
    pub queue_cap: usize,
    /// Transport-assistant cache capacity, entries.
    pub cache_cap: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            high_rate_bps: 10e6,
            low_rate_bps: 10e6,
            queue_cap: 64,
            cache_cap: 256,
        }
    }
}

struct Forwarder {
    name: String,
}

impl PacketProcessor for Forwarder {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_packet(&mut self, packet: &[u8], _now_us: u64) -> Vec<NfAction> {
        vec![NfAction::Forward(packet.to_vec())]
    }
}

/// Two-class strict-priority queue with per-class token-bucket
/// policing. Reliability-flagged (or ACK) datagrams are high class;
/// everything else, including legacy traffic, is low class.
struct QosEnforcer {
    name: String,
    high: VecDeque<Vec<u8>>,
    low: VecDeque<Vec<u8>>,
    high_tokens: f64,
    low_tokens: f64,
    high_rate: f64, // bytes per microsecond
    low_rate: f64,
    queue_cap: usize,
    last_refill_us: u64,
}

impl QosEnforcer {
    fn new(name: String, cfg: &BehaviorConfig) -> Result<Self, NfError> {
        if cfg.high_rate_bps <= 0.0 || cfg.low_rate_bps <= 0.0 || cfg.queue_cap == 0 {
            return Err(NfError::InvalidConfig(
                "rates and queue capacity must be positive".into(),
            ));
        }
        Ok(QosEnforcer {
            name,
            high: VecDeque::new(),
            low: VecDeque::new(),
            high_tokens: 0.0,
            low_tokens: 0.0,
            high_rate: cfg.high_rate_bps / 8.0 / 1e6,
            low_rate: cfg.low_rate_bps / 8.0 / 1e6,
            queue_cap: cfg.queue_cap,
            last_refill_us: 0,
        })
    }

    fn refill(&mut self, now_us: u64) {
        let dt = now_us.saturating_sub(self.last_refill_us) as f64;
        self.last_refill_us = now_us;
        // Token cap = one queue's worth of full-size packets, so bursts
        // after idle periods stay bounded.
        let cap = (self.queue_cap * 1500) as f64;
        self.high_tokens = (self.high_tokens + dt * self.high_rate).min(cap);
        self.low_tokens = (self.low_tokens + dt * self.low_rate).min(cap);
    }

    fn is_high(packet: &[u8]) -> bool {
        match decode_header(packet) {
            Ok(Decoded::Header { header, .. }) => header.is_reliable() || header.is_ack(),
            _ => false,
        }
    }

    fn drain(&mut self) -> Vec<NfAction> {
        let mut out = Vec::new();
        while let Some(p) = self.high.front() {
            if self.high_tokens < p.len() as f64 {
                break;
            }
            self.high_tokens -= p.len() as f64;
            out.push(NfAction::Forward(self.high.pop_front().unwrap()));
        }
        while let Some(p) = self.low.front() {
            if self.low_tokens < p.len() as f64 {
                break;
            }
            self.low_tokens -= p.len() as f64;
            out.push(NfAction::Forward(self.low.pop_front().unwrap()));
        }
        out
    }
}

impl PacketProcessor for QosEnforcer {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_packet(&mut self, packet: &[u8], now_us: u64) -> Vec<NfAction> {
        self.refill(now_us);
        let queue = if Self::is_high(packet) {
            &mut self.high
        } else {
            &mut self.low
        };
        if queue.len() >= self.queue_cap {
            return vec![NfAction::Drop];
        }
        queue.push_back(packet.to_vec());
        self.drain()
    }

    fn poll(&mut self, now_us: u64) -> Vec<NfAction> {
        self.refill(now_us);
        self.drain()
    }
}

/// Caches reliability-flagged payload datagrams keyed by seq; a packet
/// whose seq is already cached is a retransmission and is answered with
/// the cached copy. Acks evict everything at or below ack_seq; a
/// bounded LRU discipline caps memory.
struct TransportAssistant {
    name: String,
    cache: BTreeMap<u32, Vec<u8>>,
    lru: VecDeque<u32>,
    cache_cap: usize,
    cache_hits: u64,
}

impl TransportAssistant {
    fn new(name: String, cfg: &BehaviorConfig) -> Result<Self, NfError> {
        if cfg.cache_cap == 0 {
            return Err(NfError::InvalidConfig("cache capacity must be positive".into()));
        }
        Ok(TransportAssistant {
            name,
            cache: BTreeMap::new(),
            lru: VecDeque::new(),
            cache_cap: cfg.cache_cap,
            cache_hits: 0,
        })
    }

    fn touch(&mut self, seq: u32) {
        self.lru.retain(|&s| s != seq);
        self.lru.push_back(seq);
    }

    #[cfg(test)]
    fn holds(&self, seq: u32) -> bool {
        self.cache.contains_key(&seq)
    }
}

impl PacketProcessor for TransportAssistant {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_packet(&mut self, packet: &[u8], _now_us: u64) -> Vec<NfAction> {
        match decode_header(packet) {
            Ok(Decoded::Header { header, .. }) if header.is_ack() => {
                let evict: Vec<u32> = self
                    .cache
                    .range(..=header.ack_seq)
                    .map(|(&s, _)| s)
                    .collect();
                for s in evict {
                    self.cache.remove(&s);
                    self.lru.retain(|&x| x != s);
                }
                vec![NfAction::Forward(packet.to_vec())]
            }
            Ok(Decoded::Header { header, .. })
                if header.is_reliable() && !header.is_fin() =>
            {
                if let Some(cached) = self.cache.get(&header.seq).cloned() {
                    // Retransmission: serve the cached copy (never a
                    // fabricated payload).
                    self.cache_hits += 1;
                    self.touch(header.seq);
                    return vec![NfAction::Forward(cached)];
                }
                if self.cache.len() >= self.cache_cap {
                    if let Some(old) = self.lru.pop_front() {
                        self.cache.remove(&old);
                    }
                }
                self.cache.insert(header.seq, packet.to_vec());
                self.touch(header.seq);
                vec![NfAction::Forward(packet.to_vec())]
            }
            _ => vec![NfAction::Forward(packet.to_vec())],
        }
    }
}

/// Instantiate the behavior registered for a descriptor's name.
pub fn instantiate_nf(
    descriptor: &NfDescriptor,
    config: &BehaviorConfig,
) -> Result<Box<dyn PacketProcessor>, NfError> {
    match descriptor.name.as_str() {
        "Packet Forwarder" | "Traffic Inspector" => Ok(Box::new(Forwarder {
            name: descriptor.name.clone(),
        })),
        "QoS Enforcer" => Ok(Box::new(QosEnforcer::new(descriptor.name.clone(), config)?)),
        "Transport Assistant" => Ok(Box::new(TransportAssistant::new(
            descriptor.name.clone(),
            config,
        )?)),
        other => Err(NfError::UnknownBehavior(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Plans and chain composition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolKind {
    LegacyUdp,
    LegacyTcp,
    /// The selective-reliability custom header carried in UDP payloads.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcStep {
    pub nf_name: String,
    /// Infrastructure node hosting this NF.
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcPlan {
    /// NF references in traversal order.
    pub steps: Vec<SfcStep>,
    pub protocol: ProtocolKind,
    /// 1-based index into the candidate-path report.
    pub path_index: usize,
    /// Free-form predicted-performance notes.
    pub notes: String,
}

/// A validated chain ready for installation: one processor per step, in
/// order, with its hosting node.
pub struct DeployedChain {
    pub stages: Vec<(String, Box<dyn PacketProcessor>)>,
    pub protocol: ProtocolKind,
}

/// Validate a plan against the catalog and the selected candidate path
/// and build its processors. `path_nodes` is the ordered node list of
/// the path the plan chose; placements must visit those nodes in
/// non-regressing order.
pub fn compose_chain(
    plan: &SfcPlan,
    catalog: &Catalog,
    path_nodes: &[String],
    config: &BehaviorConfig,
) -> Result<DeployedChain, NfError> {
    let mut stages = Vec::with_capacity(plan.steps.len());
    let mut cursor = 0usize;
    for step in &plan.steps {
        let descriptor = catalog
            .get(&step.nf_name)
            .ok_or_else(|| NfError::UnknownNf(step.nf_name.clone()))?;
        let pos = path_nodes[cursor..]
            .iter()
            .position(|n| *n == step.node)
            .ok_or_else(|| NfError::PlacementOffPath(step.node.clone()))?;
        cursor += pos;
        let plan_format = match plan.protocol {
            ProtocolKind::Custom => FORMAT_LLMPROTO,
            ProtocolKind::LegacyUdp | ProtocolKind::LegacyTcp => FORMAT_LEGACY_UDP,
        };
        if !descriptor.input_formats.iter().any(|f| f == plan_format) {
            return Err(NfError::ProtocolMismatch(
                descriptor.name.clone(),
                descriptor.input_formats.join(","),
            ));
        }
        stages.push((step.node.clone(), instantiate_nf(descriptor, config)?));
    }
    Ok(DeployedChain {
        stages,
        protocol: plan.protocol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::{encode_datagram, CustomHeader, FLAG_ACK, FLAG_RELIABLE};

    fn reliable_datagram(seq: u32, body: &[u8]) -> Vec<u8> {
        encode_datagram(&CustomHeader::new(FLAG_RELIABLE, 1, seq, 0, 0), body).unwrap()
    }

    fn ack_datagram(ack_seq: u32) -> Vec<u8> {
        encode_datagram(&CustomHeader::new(FLAG_ACK, 1, 0, 0, ack_seq), &[]).unwrap()
    }

    fn best_effort_datagram(seq: u32) -> Vec<u8> {
        encode_datagram(&CustomHeader::new(0, 1, seq, 0, 0), b"be").unwrap()
    }

    #[test]
    fn default_catalog_has_four_entries() {
        let c = default_catalog();
        assert_eq!(c.len(), 4);
        for name in [
            "QoS Enforcer",
            "Packet Forwarder",
            "Transport Assistant",
            "Traffic Inspector",
        ] {
            assert!(c.get(name).is_some(), "missing {name}");
        }
    }

    #[test]
    fn empty_text_is_empty_catalog() {
        assert!(load_catalog("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = format!("{DEFAULT_CATALOG_TEXT}\n{}", {
            "[nf]\nname=Packet Forwarder\nrole=again\ninput=legacy-udp\noutput=legacy-udp\nplatform=x\ncpu_units=1\nmemory_mb=1\n"
        });
        assert_eq!(
            load_catalog(&text),
            Err(NfError::DuplicateName("Packet Forwarder".into()))
        );
    }

    #[test]
    fn zero_resource_demand_rejected() {
        let text = "[nf]\nname=X\nrole=r\ninput=legacy-udp\noutput=legacy-udp\nplatform=p\ncpu_units=0\nmemory_mb=1\n";
        assert!(matches!(
            load_catalog(text),
            Err(NfError::MalformedEntry(_))
        ));
    }

    #[test]
    fn catalog_render_round_trips() {
        let c = default_catalog();
        let reparsed = load_catalog(&c.render()).unwrap();
        assert_eq!(reparsed.entries(), c.entries());
    }

    #[test]
    fn forwarder_forwards_everything() {
        let c = default_catalog();
        let mut nf =
            instantiate_nf(c.get("Packet Forwarder").unwrap(), &BehaviorConfig::default())
                .unwrap();
        for packet in [b"legacy".to_vec(), reliable_datagram(1, b"x")] {
            assert_eq!(
                nf.on_packet(&packet, 0),
                vec![NfAction::Forward(packet.clone())]
            );
        }
        assert!(nf.poll(1_000_000).is_empty());
    }

    #[test]
    fn unknown_behavior_rejected() {
        let d = NfDescriptor {
            name: "Mystery Box".into(),
            role: "?".into(),
            input_formats: vec![FORMAT_LEGACY_UDP.into()],
            output_formats: vec![FORMAT_LEGACY_UDP.into()],
            platform: "p".into(),
            cpu_units: 1,
            memory_mb: 1,
        };
        assert_eq!(
            instantiate_nf(&d, &BehaviorConfig::default()).err(),
            Some(NfError::UnknownBehavior("Mystery Box".into()))
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let c = default_catalog();
        let cfg = BehaviorConfig {
            queue_cap: 0,
            ..BehaviorConfig::default()
        };
        assert!(matches!(
            instantiate_nf(c.get("QoS Enforcer").unwrap(), &cfg),
            Err(NfError::InvalidConfig(_))
        ));
        let cfg = BehaviorConfig {
            cache_cap: 0,
            ..BehaviorConfig::default()
        };
        assert!(matches!(
            instantiate_nf(c.get("Transport Assistant").unwrap(), &cfg),
            Err(NfError::InvalidConfig(_))
        ));
    }

    /// Independent two-packet scheduling check: with tokens for exactly
    /// one packet, a queued best-effort packet must wait for the
    /// just-arrived reliable one.
    #[test]
    fn reliable_preempts_queued_best_effort() {
        let c = default_catalog();
        // Low rate so nothing drains at arrival time 0.
        let cfg = BehaviorConfig {
            high_rate_bps: 8e6,
            low_rate_bps: 8e6,
            ..BehaviorConfig::default()
        };
        let mut nf = instantiate_nf(c.get("QoS Enforcer").unwrap(), &cfg).unwrap();
        let be = best_effort_datagram(1);
        let rel = reliable_datagram(1, b"urgent");
        assert!(nf.on_packet(&be, 0).is_empty());
        assert!(nf.on_packet(&rel, 0).is_empty());
        // 1 ms at 1 MB/s per class = 1000 bytes per class: enough for
        // one packet in each.
        let out = nf.poll(1_000);
        assert_eq!(
            out,
            vec![NfAction::Forward(rel.clone()), NfAction::Forward(be.clone())]
        );
    }

    #[test]
    fn enforcer_drops_when_queue_full() {
        let c = default_catalog();
        let cfg = BehaviorConfig {
            high_rate_bps: 8.0, // effectively frozen
            low_rate_bps: 8.0,
            queue_cap: 2,
            ..BehaviorConfig::default()
        };
        let mut nf = instantiate_nf(c.get("QoS Enforcer").unwrap(), &cfg).unwrap();
        assert!(nf.on_packet(&best_effort_datagram(1), 0).is_empty());
        assert!(nf.on_packet(&best_effort_datagram(2), 0).is_empty());
        assert_eq!(nf.on_packet(&best_effort_datagram(3), 0), vec![NfAction::Drop]);
        // High class has its own queue and is unaffected.
        assert!(nf.on_packet(&reliable_datagram(1, b"x"), 0).is_empty());
    }

    /// Work conservation: while a queue is non-empty and its class has
    /// token budget for the head packet, poll() emits it.
    #[test]
    fn enforcer_is_work_conserving() {
        let c = default_catalog();
        let cfg = BehaviorConfig {
            high_rate_bps: 80e6,
            low_rate_bps: 80e6,
            ..BehaviorConfig::default()
        };
        let mut nf = instantiate_nf(c.get("QoS Enforcer").unwrap(), &cfg).unwrap();
        let mut queued = 0usize;
        for i in 0..20 {
            let out = nf.on_packet(&best_effort_datagram(i), 0);
            queued += 1 - out.len();
        }
        // 10 ms at 10 MB/s = 100 KB budget: everything must drain now.
        let out = nf.poll(10_000);
        assert_eq!(out.len(), queued);
        assert!(nf.poll(10_001).is_empty());
    }

    #[test]
    fn assistant_caches_and_serves_retransmissions() {
        let c = default_catalog();
        let mut nf =
            instantiate_nf(c.get("Transport Assistant").unwrap(), &BehaviorConfig::default())
                .unwrap();
        let first = reliable_datagram(5, b"payload-five");
        assert_eq!(nf.on_packet(&first, 0), vec![NfAction::Forward(first.clone())]);
        // A retransmission of seq 5 (same header, possibly re-encoded)
        // is answered from the cache.
        let retx = reliable_datagram(5, b"payload-five");
        assert_eq!(nf.on_packet(&retx, 10), vec![NfAction::Forward(first)]);
    }

    #[test]
    fn assistant_evicts_on_ack_advance() {
        let mut nf = TransportAssistant::new("t".into(), &BehaviorConfig::default()).unwrap();
        nf.on_packet(&reliable_datagram(5, b"five"), 0);
        nf.on_packet(&reliable_datagram(6, b"six"), 1);
        let ack = ack_datagram(5);
        assert_eq!(nf.on_packet(&ack, 2), vec![NfAction::Forward(ack.clone())]);
        assert!(!nf.holds(5));
        assert!(nf.holds(6));
    }

    #[test]
    fn assistant_lru_eviction_is_bounded() {
        let cfg = BehaviorConfig {
            cache_cap: 3,
            ..BehaviorConfig::default()
        };
        let mut nf = TransportAssistant::new("t".into(), &cfg).unwrap();
        for seq in 1..=4 {
            nf.on_packet(&reliable_datagram(seq, b"x"), seq as u64);
        }
        assert!(!nf.holds(1), "oldest entry evicted at capacity");
        assert!(nf.holds(2) && nf.holds(3) && nf.holds(4));
    }

    #[test]
    fn assistant_passes_legacy_and_best_effort_unchanged() {
        let mut nf = TransportAssistant::new("t".into(), &BehaviorConfig::default()).unwrap();
        let legacy = b"plain old UDP".to_vec();
        assert_eq!(
            nf.on_packet(&legacy, 0),
            vec![NfAction::Forward(legacy.clone())]
        );
        let be = best_effort_datagram(9);
        assert_eq!(nf.on_packet(&be, 1), vec![NfAction::Forward(be.clone())]);
        assert!(!nf.holds(9));
    }

    fn three_step_plan(protocol: ProtocolKind) -> SfcPlan {
        SfcPlan {
            steps: vec![
                SfcStep {
                    nf_name: "QoS Enforcer".into(),
                    node: "n2".into(),
                },
                SfcStep {
                    nf_name: "Transport Assistant".into(),
                    node: "n3".into(),
                },
                SfcStep {
                    nf_name: "Packet Forwarder".into(),
                    node: "n4".into(),
                },
            ],
            protocol,
            path_index: 1,
            notes: String::new(),
        }
    }

    fn path() -> Vec<String> {
        ["n1", "n2", "n3", "n4", "n5"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn compose_valid_three_step_chain() {
        let chain = compose_chain(
            &three_step_plan(ProtocolKind::Custom),
            &default_catalog(),
            &path(),
            &BehaviorConfig::default(),
        )
        .unwrap();
        assert_eq!(chain.stages.len(), 3);
        let order: Vec<&str> = chain.stages.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(order, vec!["n2", "n3", "n4"]);
        assert_eq!(chain.protocol, ProtocolKind::Custom);
    }

    #[test]
    fn empty_chain_composes_to_nothing() {
        let plan = SfcPlan {
            steps: vec![],
            protocol: ProtocolKind::LegacyUdp,
            path_index: 1,
            notes: String::new(),
        };
        let chain = compose_chain(
            &plan,
            &default_catalog(),
            &path(),
            &BehaviorConfig::default(),
        )
        .unwrap();
        assert!(chain.stages.is_empty());
    }

    #[test]
    fn unknown_nf_rejected() {
        let mut plan = three_step_plan(ProtocolKind::Custom);
        plan.steps[0].nf_name = "Nonexistent".into();
        assert_eq!(
            compose_chain(&plan, &default_catalog(), &path(), &BehaviorConfig::default())
                .err(),
            Some(NfError::UnknownNf("Nonexistent".into()))
        );
    }

    #[test]
    fn off_path_placement_rejected() {
        let mut plan = three_step_plan(ProtocolKind::Custom);
        plan.steps[1].node = "n99".into();
        assert_eq!(
            compose_chain(&plan, &default_catalog(), &path(), &BehaviorConfig::default())
                .err(),
            Some(NfError::PlacementOffPath("n99".into()))
        );
    }

    #[test]
    fn order_regression_on_path_rejected() {
        let mut plan = three_step_plan(ProtocolKind::Custom);
        plan.steps[2].node = "n2".into(); // behind the previous stage
        assert!(matches!(
            compose_chain(&plan, &default_catalog(), &path(), &BehaviorConfig::default()),
            Err(NfError::PlacementOffPath(_))
        ));
    }

    #[test]
    fn llmproto_only_nf_on_legacy_plan_rejected() {
        let plan = three_step_plan(ProtocolKind::LegacyUdp);
        // Transport Assistant only consumes the custom format.
        assert!(matches!(
            compose_chain(&plan, &default_catalog(), &path(), &BehaviorConfig::default()),
            Err(NfError::ProtocolMismatch(name, _)) if name == "Transport Assistant"
        ));
    }
}
