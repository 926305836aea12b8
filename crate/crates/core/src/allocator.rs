//! Multi-objective SFC resource allocation.
//!
//! Embeds arriving NF chains onto an infrastructure graph by
//! enumerating k latency-ordered candidate paths, filling nodes along
//! each path, scoring every feasible candidate with the weighted
//! objective (cost, profit, utilization+fairness, green penalty — all
//! min-max normalized over the candidate set) and committing the
//! argmin. Arrivals are Poisson with exponential lifetimes; accounting
//! accrues per minute and aggregates into 24 h windows.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("empty input")]
    EmptyInput,
    #[error("inverted bounds: min {0} > max {1}")]
    InvertedBounds(f64, f64),
    #[error("weights must be non-negative and not all zero")]
    InvalidWeights,
    #[error("no path between {0} and {1}")]
    NoPath(String, String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("source equals destination `{0}`")]
    SourceIsDestination(String),
    #[error("less than 24 h simulated since the last window close")]
    WindowIncomplete,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("malformed infrastructure entry: {0}")]
    MalformedEntry(String),
}

// ---------------------------------------------------------------------------
// Infrastructure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    /// Hostable instances.
    pub capacity: u32,
    /// $/s per committed instance.
    pub op_cost: f64,
    /// $/s per committed instance.
    pub green_penalty: f64,
    /// Selling price, $/s per committed instance.
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub bandwidth_bps: f64,
    pub latency_us: u64,
}

#[derive(Debug, Clone)]
pub struct Infrastructure {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    index: HashMap<String, usize>,
    adjacency: HashMap<String, Vec<usize>>,
}

impl Infrastructure {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self, AllocError> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(AllocError::DuplicateNode(n.id.clone()));
            }
        }
        for l in &links {
            for end in [&l.a, &l.b] {
                if !index.contains_key(end) {
                    return Err(AllocError::UnknownNode(end.clone()));
                }
            }
        }
        let mut adjacency: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            adjacency.entry(l.a.clone()).or_default().push(i);
            adjacency.entry(l.b.clone()).or_default().push(i);
        }
        Ok(Infrastructure {
            nodes,
            links,
            index,
            adjacency,
        })
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn total_capacity(&self) -> u64 {
        self.nodes.iter().map(|n| n.capacity as u64).sum()
    }

    fn link_between(&self, a: &str, b: &str) -> Option<usize> {
        self.adjacency.get(a).and_then(|ls| {
            ls.iter()
                .copied()
                .find(|&i| {
                    let l = &self.links[i];
                    (l.a == a && l.b == b) || (l.a == b && l.b == a)
                })
        })
    }

    /// Default 24-node / 57-link scenario: a ring plus seeded chords,
    /// with per-node parameters drawn from the standard ranges
    /// (op_cost 0.03-0.08, green 0.01-0.05, price 0.07-0.08 $/s,
    /// capacity 40-100 instances). Green penalty falls as op cost
    /// rises: nodes running on renewable supply charge more to
    /// operate, so favoring them trades cost for energy rather than
    /// stacking both on the same nodes.
    pub fn default_scenario(seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x1f7a_55aa);
        let n = 24usize;
        let nodes: Vec<NodeSpec> = (0..n)
            .map(|i| {
                let op_cost: f64 = rng.gen_range(0.035..=0.075);
                let noise: f64 = rng.gen_range(-0.001..=0.001);
                let green_penalty = (0.085 - op_cost + noise).clamp(0.01, 0.05);
                NodeSpec {
                    id: format!("n{:02}", i + 1),
                    capacity: rng.gen_range(40..=100),
                    op_cost,
                    green_penalty,
                    price: rng.gen_range(0.07..=0.08),
                }
            })
            .collect();
        let mut pairs: HashSet<(usize, usize)> = HashSet::new();
        let mut links = Vec::new();
        let add = |links: &mut Vec<LinkSpec>,
                       pairs: &mut HashSet<(usize, usize)>,
                       rng: &mut rand_chacha::ChaCha12Rng,
                       i: usize,
                       j: usize| {
            let key = (i.min(j), i.max(j));
            if i != j && pairs.insert(key) {
                links.push(LinkSpec {
                    a: format!("n{:02}", key.0 + 1),
                    b: format!("n{:02}", key.1 + 1),
                    bandwidth_bps: 1e9,
                    latency_us: rng.gen_range(1_000..=10_000),
                });
                true
            } else {
                false
            }
        };
        for i in 0..n {
            add(&mut links, &mut pairs, &mut rng, i, (i + 1) % n);
        }
        while links.len() < 57 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            add(&mut links, &mut pairs, &mut rng, i, j);
        }
        Infrastructure::new(nodes, links).expect("generated scenario is valid")
    }

    /// Serialize to the structured-text infrastructure file format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!(
                "[node]\nid={}\ncapacity={}\nop_cost={}\ngreen_penalty={}\nprice={}\n\n",
                n.id, n.capacity, n.op_cost, n.green_penalty, n.price
            ));
        }
        for l in &self.links {
            out.push_str(&format!(
                "[link]\na={}\nb={}\nbandwidth_bps={}\nlatency_us={}\n\n",
                l.a, l.b, l.bandwidth_bps, l.latency_us
            ));
        }
        out
    }

    /// Parse the structured-text infrastructure file format.
    pub fn parse(text: &str) -> Result<Self, AllocError> {
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        let mut block: Option<(String, BTreeMap<String, String>)> = None;
        let flush = |block: &mut Option<(String, BTreeMap<String, String>)>,
                         nodes: &mut Vec<NodeSpec>,
                         links: &mut Vec<LinkSpec>|
         -> Result<(), AllocError> {
            let Some((kind, fields)) = block.take() else {
                return Ok(());
            };
            let get = |name: &str| -> Result<&String, AllocError> {
                fields
                    .get(name)
                    .ok_or_else(|| AllocError::MalformedEntry(format!("missing `{name}`")))
            };
            let num = |name: &str| -> Result<f64, AllocError> {
                get(name)?.parse().map_err(|_| {
                    AllocError::MalformedEntry(format!("`{name}` is not numeric"))
                })
            };
            match kind.as_str() {
                "node" => nodes.push(NodeSpec {
                    id: get("id")?.clone(),
                    capacity: num("capacity")? as u32,
                    op_cost: num("op_cost")?,
                    green_penalty: num("green_penalty")?,
                    price: num("price")?,
                }),
                "link" => links.push(LinkSpec {
                    a: get("a")?.clone(),
                    b: get("b")?.clone(),
                    bandwidth_bps: num("bandwidth_bps")?,
                    latency_us: num("latency_us")? as u64,
                }),
                other => {
                    return Err(AllocError::MalformedEntry(format!(
                        "unknown block `[{other}]`"
                    )))
                }
            }
            Ok(())
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(kind) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                flush(&mut block, &mut nodes, &mut links)?;
                block = Some((kind.to_string(), BTreeMap::new()));
            } else if let Some((k, v)) = line.split_once('=') {
                let Some((_, fields)) = block.as_mut() else {
                    return Err(AllocError::MalformedEntry(format!(
                        "field `{line}` outside a block"
                    )));
                };
                fields.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                return Err(AllocError::MalformedEntry(format!("unparseable `{line}`")));
            }
        }
        flush(&mut block, &mut nodes, &mut links)?;
        Infrastructure::new(nodes, links)
    }
}

// ---------------------------------------------------------------------------
// Metric primitives
// ---------------------------------------------------------------------------

/// Jain's fairness index: (sum x)^2 / (n * sum x^2). All-zero input is
/// defined as perfectly fair (J = 1).
pub fn jain_index(values: &[f64]) -> Result<f64, AllocError> {
    if values.is_empty() {
        return Err(AllocError::EmptyInput);
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Ok(1.0);
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

/// Linear rescale of `x` into [0, 1]; a degenerate population
/// (min = max) maps to 0.
pub fn minmax_normalize(x: f64, min: f64, max: f64) -> Result<f64, AllocError> {
    if min > max {
        return Err(AllocError::InvertedBounds(min, max));
    }
    if min == max {
        return Ok(0.0);
    }
    Ok(((x - min) / (max - min)).clamp(0.0, 1.0))
}

/// The alpha_1..alpha_4 vector, normalized to sum 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    values: [f64; 4],
}

impl ObjectiveWeights {
    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Result<Self, AllocError> {
        let raw = [a1, a2, a3, a4];
        if raw.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(AllocError::InvalidWeights);
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(AllocError::InvalidWeights);
        }
        let values = if (sum - 1.0).abs() < 1e-9 {
            raw
        } else {
            [raw[0] / sum, raw[1] / sum, raw[2] / sum, raw[3] / sum]
        };
        Ok(ObjectiveWeights { values })
    }

    /// Pure profit focus (alpha_2 = 1): the static-weights control.
    pub fn profit_only() -> Self {
        ObjectiveWeights {
            values: [0.0, 1.0, 0.0, 0.0],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.values
    }
}

/// The five objective terms for one placement candidate. `raw` holds
/// the unscaled values; `norm` the min-max rescaling over the current
/// candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub cost: f64,
    pub profit: f64,
    pub utilization: f64,
    pub fairness: f64,
    pub green_penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub raw: MetricVector,
    pub norm: MetricVector,
}

/// Weighted objective over normalized terms; lower is better.
pub fn objective(norm: &MetricVector, weights: &ObjectiveWeights) -> f64 {
    let [a1, a2, a3, a4] = weights.as_array();
    a1 * norm.cost
        + a2 * (1.0 - norm.profit)
        + a3 * (norm.utilization + (1.0 - norm.fairness))
        + a4 * norm.green_penalty
}

/// Min-max-normalize a candidate set and return each candidate's
/// normalized vector. Fairness keeps its raw [1/n, 1] value direction;
/// like the other terms it is rescaled over the set.
pub fn normalize_candidates(raw: &[MetricVector]) -> Vec<MetricVector> {
    let field = |f: fn(&MetricVector) -> f64| -> (f64, f64) {
        let min = raw.iter().map(f).fold(f64::INFINITY, f64::min);
        let max = raw.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    };
    let (cmin, cmax) = field(|m| m.cost);
    let (pmin, pmax) = field(|m| m.profit);
    let (umin, umax) = field(|m| m.utilization);
    let (fmin, fmax) = field(|m| m.fairness);
    let (gmin, gmax) = field(|m| m.green_penalty);
    raw.iter()
        .map(|m| MetricVector {
            cost: minmax_normalize(m.cost, cmin, cmax).unwrap(),
            profit: minmax_normalize(m.profit, pmin, pmax).unwrap(),
            utilization: minmax_normalize(m.utilization, umin, umax).unwrap(),
            fairness: minmax_normalize(m.fairness, fmin, fmax).unwrap(),
            green_penalty: minmax_normalize(m.green_penalty, gmin, gmax).unwrap(),
        })
        .collect()
}

/// Normalize, score, and return the argmin index. Ties resolve to the
/// lowest index (candidates are ordered by path, then construction).
pub fn choose_candidate(raw: &[MetricVector], weights: &ObjectiveWeights) -> Option<usize> {
    if raw.is_empty() {
        return None;
    }
    let norm = normalize_candidates(raw);
    let mut best = 0usize;
    let mut best_score = objective(&norm[0], weights);
    for (i, n) in norm.iter().enumerate().skip(1) {
        let score = objective(n, weights);
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    Some(best)
}

// ---------------------------------------------------------------------------
// Candidate paths (Yen-style k shortest, by latency)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub nodes: Vec<String>,
    pub latency_us: u64,
    /// Free instances per path node, aligned with `nodes`.
    pub free_instances: Vec<u32>,
    /// Minimum free bandwidth over the path links, bps.
    pub free_bandwidth_bps: f64,
}

/// The candidate-path listing handed to the SFC & Protocol agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaReport {
    pub source: String,
    pub destination: String,
    pub paths: Vec<CandidatePath>,
}

impl RaReport {
    /// Prompt-embeddable rendering.
    pub fn render(&self) -> String {
        let mut out = format!(
            "Candidate paths from {} to {}:\n",
            self.source, self.destination
        );
        for (i, p) in self.paths.iter().enumerate() {
            out.push_str(&format!(
                "Path {}: {} | latency {:.1} ms | free bandwidth {:.0} bps\n",
                i + 1,
                p.nodes.join(" -> "),
                p.latency_us as f64 / 1000.0,
                p.free_bandwidth_bps
            ));
            let free: Vec<String> = p
                .nodes
                .iter()
                .zip(&p.free_instances)
                .map(|(n, f)| format!("{n}={f}"))
                .collect();
            out.push_str(&format!("  free instances: {}\n", free.join(", ")));
        }
        out
    }
}

/// Dijkstra by latency with lexicographic tie-break on the node
/// sequence; `blocked_nodes`/`blocked_links` support Yen's spur
/// enumeration.
fn shortest_path(
    infra: &Infrastructure,
    src: &str,
    dst: &str,
    blocked_nodes: &HashSet<String>,
    blocked_links: &HashSet<usize>,
) -> Option<(u64, Vec<String>)> {
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct Entry(u64, Vec<String>);
    let mut heap: BinaryHeap<Reverse<Entry>> = BinaryHeap::new();
    let mut settled: HashSet<String> = HashSet::new();
    heap.push(Reverse(Entry(0, vec![src.to_string()])));
    while let Some(Reverse(Entry(dist, path))) = heap.pop() {
        let here = path.last().unwrap().clone();
        if here == dst {
            return Some((dist, path));
        }
        if !settled.insert(here.clone()) {
            continue;
        }
        for &li in infra.adjacency.get(&here).into_iter().flatten() {
            if blocked_links.contains(&li) {
                continue;
            }
            let l = &infra.links[li];
            let next = if l.a == here { &l.b } else { &l.a };
            if settled.contains(next) || blocked_nodes.contains(next) {
                continue;
            }
            let mut p = path.clone();
            p.push(next.clone());
            heap.push(Reverse(Entry(dist + l.latency_us, p)));
        }
    }
    None
}

/// Up to `k` loop-free paths in ascending latency order (Yen-style
/// enumeration), annotated with free resources.
pub fn candidate_paths(
    infra: &Infrastructure,
    free_instances: &dyn Fn(&str) -> u32,
    free_bandwidth: &dyn Fn(usize) -> f64,
    src: &str,
    dst: &str,
    k: usize,
) -> Result<RaReport, AllocError> {
    if infra.node(src).is_none() {
        return Err(AllocError::UnknownNode(src.to_string()));
    }
    if infra.node(dst).is_none() {
        return Err(AllocError::UnknownNode(dst.to_string()));
    }
    if src == dst {
        return Err(AllocError::SourceIsDestination(src.to_string()));
    }
    let none_nodes = HashSet::new();
    let none_links = HashSet::new();
    let first = shortest_path(infra, src, dst, &none_nodes, &none_links)
        .ok_or_else(|| AllocError::NoPath(src.to_string(), dst.to_string()))?;
    let mut accepted: Vec<(u64, Vec<String>)> = vec![first];
    let mut candidates: Vec<(u64, Vec<String>)> = Vec::new();
    while accepted.len() < k {
        let (_, last_path) = accepted.last().unwrap().clone();
        for spur_idx in 0..last_path.len() - 1 {
            let spur_node = &last_path[spur_idx];
            let root: Vec<String> = last_path[..=spur_idx].to_vec();
            let mut blocked_links = HashSet::new();
            for (_, p) in accepted.iter().chain(candidates.iter()) {
                if p.len() > spur_idx + 1 && p[..=spur_idx] == root[..] {
                    if let Some(li) = infra.link_between(&p[spur_idx], &p[spur_idx + 1]) {
                        blocked_links.insert(li);
                    }
                }
            }
            let blocked_nodes: HashSet<String> = root[..spur_idx].iter().cloned().collect();
            if let Some((spur_cost, spur_path)) =
                shortest_path(infra, spur_node, dst, &blocked_nodes, &blocked_links)
            {
                let mut total: Vec<String> = root[..spur_idx].to_vec();
                total.extend(spur_path);
                let root_cost: u64 = root
                    .windows(2)
                    .map(|w| {
                        infra.links[infra.link_between(&w[0], &w[1]).unwrap()].latency_us
                    })
                    .sum();
                let entry = (root_cost + spur_cost, total);
                if !accepted.contains(&entry) && !candidates.contains(&entry) {
                    candidates.push(entry);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort();
        accepted.push(candidates.remove(0));
    }
    let paths = accepted
        .into_iter()
        .map(|(latency_us, nodes)| {
            let free_bandwidth_bps = nodes
                .windows(2)
                .map(|w| free_bandwidth(infra.link_between(&w[0], &w[1]).unwrap()))
                .fold(f64::INFINITY, f64::min);
            let free = nodes.iter().map(|n| free_instances(n)).collect();
            CandidatePath {
                free_instances: free,
                free_bandwidth_bps,
                latency_us,
                nodes,
            }
        })
        .collect();
    Ok(RaReport {
        source: src.to_string(),
        destination: dst.to_string(),
        paths,
    })
}

// ---------------------------------------------------------------------------
// Allocator state and embedding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcRequest {
    pub id: u64,
    pub source: String,
    pub destination: String,
    /// NFs in the chain, one instance each; in [1, 20].
    pub nf_count: u32,
    pub bandwidth_bps: f64,
    pub latency_bound_ms: f64,
    pub lifetime_s: f64,
    pub arrival_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub request_id: u64,
    /// Hosting node per NF, in chain order.
    pub nodes: Vec<String>,
    pub path: Vec<String>,
    pub bandwidth_bps: f64,
    pub expires_at_s: f64,
    pub metrics: DecisionMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedOutcome {
    Placed(Placement),
    Rejected,
}

#[derive(Debug, Clone)]
pub struct RequestProfile {
    pub nf_min: u32,
    pub nf_max: u32,
    pub bandwidth_min_bps: f64,
    pub bandwidth_max_bps: f64,
    pub latency_bound_min_ms: f64,
    pub latency_bound_max_ms: f64,
    pub lifetime_mean_s: f64,
}

impl Default for RequestProfile {
    fn default() -> Self {
        RequestProfile {
            nf_min: 1,
            nf_max: 20,
            bandwidth_min_bps: 1e6,
            bandwidth_max_bps: 1e7,
            latency_bound_min_ms: 20.0,
            latency_bound_max_ms: 100.0,
            lifetime_mean_s: 1800.0,
        }
    }
}

/// Arrival-rate schedule: a base rate, doubled from `double_at_min`
/// onward.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    pub base_per_min: f64,
    pub double_at_min: Option<u64>,
}

impl Default for RateSchedule {
    fn default() -> Self {
        RateSchedule {
            base_per_min: 6.0,
            double_at_min: Some(72 * 60),
        }
    }
}

impl RateSchedule {
    pub fn rate_at(&self, minute: u64) -> f64 {
        match self.double_at_min {
            Some(t) if minute >= t => self.base_per_min * 2.0,
            _ => self.base_per_min,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocatorConfig {
    pub k_paths: usize,
    pub request: RequestProfile,
    pub schedule: RateSchedule,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        AllocatorConfig {
            k_paths: 4,
            request: RequestProfile::default(),
            schedule: RateSchedule::default(),
        }
    }
}

/// One minute of accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteSample {
    pub minute: u64,
    pub arrival_rate_per_min: f64,
    pub arrivals: u64,
    pub accepted: u64,
    pub cost_per_min: f64,
    pub revenue_per_min: f64,
    pub green_per_min: f64,
    pub profit_per_min: f64,
    pub utilization: f64,
    pub fairness: f64,
}

/// Aggregates over one closed 24 h window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub start_minute: u64,
    pub end_minute: u64,
    pub mean_arrival_rate_per_min: f64,
    pub mean_cost_per_min: f64,
    pub mean_revenue_per_min: f64,
    pub mean_green_per_min: f64,
    pub mean_profit_per_min: f64,
    pub mean_utilization: f64,
    pub mean_fairness: f64,
    pub acceptance_ratio: f64,
    pub minutes: Vec<MinuteSample>,
}

pub struct AllocatorState {
    pub infra: Infrastructure,
    pub config: AllocatorConfig,
    pub weights: ObjectiveWeights,
    committed: Vec<u32>,
    committed_bw: Vec<f64>,
    active: BTreeMap<u64, Placement>,
    expiry: BinaryHeap<Reverse<(u64, u64)>>, // (expires_at_ms, request_id)
    next_request_id: u64,
    minute: u64,
    samples: Vec<MinuteSample>,
    window_cursor: usize,
    pub total_arrivals: u64,
    pub total_accepted: u64,
}

impl AllocatorState {
    pub fn new(infra: Infrastructure, config: AllocatorConfig, weights: ObjectiveWeights) -> Self {
        let n = infra.nodes.len();
        let m = infra.links.len();
        AllocatorState {
            infra,
            config,
            weights,
            committed: vec![0; n],
            committed_bw: vec![0.0; m],
            active: BTreeMap::new(),
            expiry: BinaryHeap::new(),
            next_request_id: 1,
            minute: 0,
            samples: Vec::new(),
            window_cursor: 0,
            total_arrivals: 0,
            total_accepted: 0,
        }
    }

    pub fn minute(&self) -> u64 {
        self.minute
    }

    pub fn samples(&self) -> &[MinuteSample] {
        &self.samples
    }

    pub fn active_placements(&self) -> usize {
        self.active.len()
    }

    pub fn committed_instances(&self) -> u64 {
        self.committed.iter().map(|&c| c as u64).sum()
    }

    pub fn free_instances(&self, node: &str) -> u32 {
        match self.infra.node_index(node) {
            Some(i) => self.infra.nodes[i].capacity - self.committed[i],
            None => 0,
        }
    }

    pub fn utilization(&self) -> f64 {
        self.committed_instances() as f64 / self.infra.total_capacity() as f64
    }

    pub fn per_node_utilization(&self) -> Vec<f64> {
        self.infra
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| self.committed[i] as f64 / n.capacity as f64)
            .collect()
    }

    /// Candidate paths with current free resources, for the RA report.
    pub fn candidate_paths(&self, src: &str, dst: &str, k: usize) -> Result<RaReport, AllocError> {
        let free_inst = |id: &str| self.free_instances(id);
        let free_bw =
            |li: usize| self.infra.links[li].bandwidth_bps - self.committed_bw[li];
        candidate_paths(&self.infra, &free_inst, &free_bw, src, dst, k)
    }

    /// Embed one request: enumerate placements over the k candidate
    /// paths (ordered fill with spill), score with the current weights,
    /// commit the argmin. Rejection is a result, not an error.
    pub fn embed_sfc(&mut self, req: &SfcRequest) -> Result<EmbedOutcome, AllocError> {
        let report = match self.candidate_paths(&req.source, &req.destination, self.config.k_paths)
        {
            Ok(r) => r,
            Err(AllocError::NoPath(_, _)) => return Ok(EmbedOutcome::Rejected),
            Err(e) => return Err(e),
        };
        let mut feasible: Vec<(Vec<String>, &CandidatePath, MetricVector)> = Vec::new();
        for path in &report.paths {
            if path.latency_us as f64 / 1000.0 > req.latency_bound_ms {
                continue;
            }
            if path.free_bandwidth_bps < req.bandwidth_bps {
                continue;
            }
            // Ordered fill: assign NFs to the path's transit nodes in
            // order, spilling to the next node when free capacity runs
            // out. The endpoints terminate the chain but do not host
            // NFs, so each candidate path offers a distinct node set.
            if path.nodes.len() < 3 {
                continue;
            }
            let transit = 1..path.nodes.len() - 1;
            let mut assignment: Vec<String> = Vec::with_capacity(req.nf_count as usize);
            let mut remaining = req.nf_count;
            for (node, &free) in path.nodes[transit.clone()]
                .iter()
                .zip(&path.free_instances[transit])
            {
                let take = remaining.min(free);
                for _ in 0..take {
                    assignment.push(node.clone());
                }
                remaining -= take;
                if remaining == 0 {
                    break;
                }
            }
            if remaining > 0 {
                continue;
            }
            let raw = self.rate_metrics(&assignment);
            feasible.push((assignment, path, raw));
        }
        if feasible.is_empty() {
            return Ok(EmbedOutcome::Rejected);
        }
        let raws: Vec<MetricVector> = feasible.iter().map(|(_, _, m)| *m).collect();
        let norms = normalize_candidates(&raws);
        let best = choose_candidate(&raws, &self.weights).expect("non-empty");
        let (assignment, path, raw) = feasible.swap_remove(best);
        let norm = norms[best];
        let placement = Placement {
            request_id: req.id,
            nodes: assignment,
            path: path.nodes.clone(),
            bandwidth_bps: req.bandwidth_bps,
            expires_at_s: req.arrival_time_s + req.lifetime_s,
            metrics: DecisionMetrics { raw, norm },
        };
        self.commit(&placement);
        Ok(EmbedOutcome::Placed(placement))
    }

    /// Raw objective terms for a prospective assignment.
    fn rate_metrics(&self, assignment: &[String]) -> MetricVector {
        let mut cost = 0.0;
        let mut revenue = 0.0;
        let mut green = 0.0;
        let mut extra = vec![0u32; self.infra.nodes.len()];
        for node in assignment {
            let i = self.infra.node_index(node).expect("assignment node exists");
            cost += self.infra.nodes[i].op_cost;
            revenue += self.infra.nodes[i].price;
            green += self.infra.nodes[i].green_penalty;
            extra[i] += 1;
        }
        let utilization = (self.committed_instances() + assignment.len() as u64) as f64
            / self.infra.total_capacity() as f64;
        let per_node: Vec<f64> = self
            .infra
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (self.committed[i] + extra[i]) as f64 / n.capacity as f64)
            .collect();
        let fairness = jain_index(&per_node).expect("non-empty infra");
        MetricVector {
            cost,
            profit: revenue - cost - green,
            utilization,
            fairness,
            green_penalty: green,
        }
    }

    fn commit(&mut self, p: &Placement) {
        for node in &p.nodes {
            let i = self.infra.node_index(node).expect("node exists");
            self.committed[i] += 1;
            debug_assert!(self.committed[i] <= self.infra.nodes[i].capacity);
        }
        for w in p.path.windows(2) {
            let li = self.infra.link_between(&w[0], &w[1]).expect("path link");
            self.committed_bw[li] += p.bandwidth_bps;
        }
        self.expiry
            .push(Reverse(((p.expires_at_s * 1000.0) as u64, p.request_id)));
        self.active.insert(p.request_id, p.clone());
    }

    fn release_expired(&mut self, now_s: f64) {
        while let Some(&Reverse((at_ms, id))) = self.expiry.peek() {
            if at_ms as f64 / 1000.0 > now_s {
                break;
            }
            self.expiry.pop();
            if let Some(p) = self.active.remove(&id) {
                for node in &p.nodes {
                    let i = self.infra.node_index(node).expect("node exists");
                    self.committed[i] -= 1;
                }
                for w in p.path.windows(2) {
                    let li = self.infra.link_between(&w[0], &w[1]).expect("path link");
                    self.committed_bw[li] -= p.bandwidth_bps;
                }
            }
        }
    }

    fn draw_request(&mut self, rng: &mut impl Rng, arrival_time_s: f64) -> SfcRequest {
        let profile = self.config.request.clone();
        let n = self.infra.nodes.len();
        let src = rng.gen_range(0..n);
        let mut dst = rng.gen_range(0..n);
        while dst == src {
            dst = rng.gen_range(0..n);
        }
        let lifetime = Exp::new(1.0 / profile.lifetime_mean_s)
            .expect("positive rate")
            .sample(rng);
        let id = self.next_request_id;
        self.next_request_id += 1;
        SfcRequest {
            id,
            source: self.infra.nodes[src].id.clone(),
            destination: self.infra.nodes[dst].id.clone(),
            nf_count: rng.gen_range(profile.nf_min..=profile.nf_max),
            bandwidth_bps: rng.gen_range(profile.bandwidth_min_bps..=profile.bandwidth_max_bps),
            latency_bound_ms: rng
                .gen_range(profile.latency_bound_min_ms..=profile.latency_bound_max_ms),
            lifetime_s: lifetime.max(1.0),
            arrival_time_s,
        }
    }

    /// Advance simulated time by whole minutes: expirations, Poisson
    /// arrivals at the schedule's current rate, embedding, and
    /// per-minute accounting.
    pub fn advance_minutes(&mut self, minutes: u64, rng: &mut impl Rng) -> Result<(), AllocError> {
        for _ in 0..minutes {
            let minute = self.minute;
            let now_s = minute as f64 * 60.0;
            self.release_expired(now_s);
            let rate = self.config.schedule.rate_at(minute);
            let arrivals = if rate > 0.0 {
                Poisson::new(rate).expect("positive rate").sample(rng) as u64
            } else {
                0
            };
            let mut accepted = 0u64;
            for _ in 0..arrivals {
                let req = self.draw_request(rng, now_s);
                if let EmbedOutcome::Placed(_) = self.embed_sfc(&req)? {
                    accepted += 1;
                }
            }
            self.total_arrivals += arrivals;
            self.total_accepted += accepted;
            // Monetary accrual: $/s rates over a 60 s minute.
            let mut cost = 0.0;
            let mut revenue = 0.0;
            let mut green = 0.0;
            for (i, n) in self.infra.nodes.iter().enumerate() {
                let inst = self.committed[i] as f64;
                cost += inst * n.op_cost * 60.0;
                revenue += inst * n.price * 60.0;
                green += inst * n.green_penalty * 60.0;
            }
            let fairness = jain_index(&self.per_node_utilization())?;
            self.samples.push(MinuteSample {
                minute,
                arrival_rate_per_min: rate,
                arrivals,
                accepted,
                cost_per_min: cost,
                revenue_per_min: revenue,
                green_per_min: green,
                profit_per_min: revenue - cost - green,
                utilization: self.utilization(),
                fairness,
            });
            self.minute += 1;
        }
        Ok(())
    }

    /// Close and return the next 24 h metrics window.
    pub fn metrics_window(&mut self) -> Result<MetricsWindow, AllocError> {
        const WINDOW: usize = 24 * 60;
        if self.samples.len() < self.window_cursor + WINDOW {
            return Err(AllocError::WindowIncomplete);
        }
        let minutes: Vec<MinuteSample> =
            self.samples[self.window_cursor..self.window_cursor + WINDOW].to_vec();
        self.window_cursor += WINDOW;
        let n = minutes.len() as f64;
        let mean = |f: fn(&MinuteSample) -> f64| minutes.iter().map(f).sum::<f64>() / n;
        let arrivals: u64 = minutes.iter().map(|m| m.arrivals).sum();
        let accepted: u64 = minutes.iter().map(|m| m.accepted).sum();
        Ok(MetricsWindow {
            start_minute: minutes.first().map(|m| m.minute).unwrap_or(0),
            end_minute: minutes.last().map(|m| m.minute).unwrap_or(0),
            mean_arrival_rate_per_min: mean(|m| m.arrival_rate_per_min),
            mean_cost_per_min: mean(|m| m.cost_per_min),
            mean_revenue_per_min: mean(|m| m.revenue_per_min),
            mean_green_per_min: mean(|m| m.green_per_min),
            mean_profit_per_min: mean(|m| m.profit_per_min),
            mean_utilization: mean(|m| m.utilization),
            mean_fairness: mean(|m| m.fairness),
            acceptance_ratio: if arrivals == 0 {
                1.0
            } else {
                accepted as f64 / arrivals as f64
            },
            minutes,
        })
    }
}
