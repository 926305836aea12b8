//! Runtime congestion-control adaptation: a long-lived window-governed
//! flow through a bottleneck, with an agent consulted at a fixed
//! interval. The agent sees a fused report of the last interval's
//! per-second samples and may keep, tune, switch, or generate-and-swap
//! the scheme — all without resetting the connection.

use chainsim::agents::{cc_agent_evaluate, fuse_reports, DecisionLog, Reasoner};
use chainsim::cc::SwapMarker;
use chainsim::netsim::{
    BgPattern, BgSpec, FlowKind, FlowSpec, NodeKind, SimLink, SimNode, SimTopology, Simulator,
    TraceRow,
};
use chainsim::reports::ObservedQos;
use serde::Serialize;

use crate::config::CcConfig;
use crate::{profile, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct CcSummary {
    pub final_scheme: String,
    pub swaps: Vec<SwapMarker>,
    /// (cwnd immediately before, immediately after) each swap.
    pub swap_cwnd_pairs: Vec<(f64, f64)>,
    pub registered_schemes: Vec<String>,
}

#[derive(Debug)]
pub struct CcResults {
    pub rows: Vec<TraceRow>,
    pub summary: CcSummary,
    pub trace_csv: String,
    pub summary_json: String,
    pub decision_log_text: String,
}

impl CcResults {
    pub fn output_files(&self) -> Vec<(String, String)> {
        vec![
            ("cc_trace.csv".to_string(), self.trace_csv.clone()),
            ("cc_summary.json".to_string(), self.summary_json.clone()),
            ("decisions.log".to_string(), self.decision_log_text.clone()),
        ]
    }
}

/// Mean throughput, mean loss fraction, and cwnd coefficient of
/// variation over rows with `from_s <= t_s < to_s`.
pub fn phase_stats(rows: &[TraceRow], from_s: u64, to_s: u64) -> (f64, f64, f64) {
    let phase: Vec<&TraceRow> = rows
        .iter()
        .filter(|r| r.t_s >= from_s && r.t_s < to_s)
        .collect();
    if phase.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = phase.len() as f64;
    let mean_tp = phase.iter().map(|r| r.throughput_bps).sum::<f64>() / n;
    let mean_loss = phase.iter().map(|r| r.loss_pct / 100.0).sum::<f64>() / n;
    let mean_cwnd = phase.iter().map(|r| r.cwnd_pkts).sum::<f64>() / n;
    let var = phase
        .iter()
        .map(|r| (r.cwnd_pkts - mean_cwnd).powi(2))
        .sum::<f64>()
        / n;
    let cov = if mean_cwnd > 0.0 {
        var.sqrt() / mean_cwnd
    } else {
        0.0
    };
    (mean_tp, mean_loss, cov)
}

fn topology(cfg: &CcConfig) -> SimTopology {
    let node = |id: &str, kind: NodeKind| SimNode {
        id: id.into(),
        kind,
    };
    let link = |a: &str, b: &str, rate: f64| SimLink {
        a: a.into(),
        b: b.into(),
        rate_bps: rate,
        delay_us: cfg.link_delay_us,
        loss: 0.0,
        queue_cap: cfg.queue_cap,
    };
    SimTopology {
        nodes: vec![
            node("src", NodeKind::Host),
            node("s1", NodeKind::Switch),
            node("s2", NodeKind::Switch),
            node("dst", NodeKind::Host),
        ],
        links: vec![
            link("src", "s1", cfg.side_rate_bps),
            link("s1", "s2", cfg.bottleneck_rate_bps),
            link("s2", "dst", cfg.side_rate_bps),
        ],
    }
}

/// Per-second samples of the last interval folded into report form.
fn window_samples(rows: &[TraceRow], from_s: u64) -> Vec<ObservedQos> {
    let mut samples = Vec::new();
    let mut prev_rtt: Option<f64> = None;
    for r in rows.iter().filter(|r| r.t_s >= from_s) {
        let jitter = prev_rtt.map(|p| (r.rtt_ms - p).abs()).unwrap_or(0.0);
        prev_rtt = Some(r.rtt_ms);
        samples.push(ObservedQos {
            latency_ms: r.rtt_ms / 2.0,
            jitter_ms: jitter,
            throughput_bps: r.throughput_bps,
            loss: r.loss_pct / 100.0,
            rtt_ms: r.rtt_ms,
            retransmission_ratio: r.loss_pct / 100.0,
            cwnd_samples: vec![r.cwnd_pkts],
        });
    }
    samples
}

pub fn run_cc_experiment(
    cfg: &CcConfig,
    seed: u64,
    reasoner: &mut dyn Reasoner,
) -> Result<CcResults, CliError> {
    let mut sim = Simulator::new(topology(cfg), seed)?;
    let flow = sim.add_flow(FlowSpec {
        src: "src".into(),
        dst: "dst".into(),
        start_us: 0,
        kind: FlowKind::Tcp {
            packets: None,
            payload_len: cfg.payload_len,
            scheme: cfg.initial_scheme.clone(),
        },
        use_chain: false,
    })?;
    if cfg.bg_rate_bps > 0.0 {
        sim.attach_background_traffic(BgSpec {
            src: "src".into(),
            dst: "dst".into(),
            rate_bps: cfg.bg_rate_bps,
            payload_len: cfg.payload_len,
            pattern: BgPattern::OnOff {
                period_us: cfg.bg_period_us,
                duty: cfg.bg_duty,
            },
        })?;
    }

    let mut log = DecisionLog::default();
    let app = profile::application_profile();
    let env = profile::device_environment();
    let runtime = profile::runtime_requirements();
    let interval_s = cfg.eval_interval_s;
    let metrics = sim.run_controlled(
        cfg.duration_s * 1_000_000,
        flow,
        cfg.eval_interval_s * 1_000_000,
        |now_us, registry, conn, rows| {
            let t_s = now_us / 1_000_000;
            let samples = window_samples(rows, t_s.saturating_sub(interval_s));
            let qoe = profile::perceived_quality("periodic evaluation", 0.7);
            let Ok(ifa) = fuse_reports(&samples, app.clone(), env.clone(), qoe, runtime.clone())
            else {
                return;
            };
            cc_agent_evaluate(&ifa, reasoner, registry, conn, now_us, &mut log);
        },
    )?;

    let summary = &metrics.flows[&flow];
    let rows = metrics.rows.get(&flow).cloned().unwrap_or_default();
    let cc_summary = CcSummary {
        final_scheme: summary
            .scheme_swaps
            .last()
            .map(|s| s.to.clone())
            .unwrap_or_else(|| cfg.initial_scheme.clone()),
        swaps: summary.scheme_swaps.clone(),
        swap_cwnd_pairs: summary.swap_cwnd_pairs.clone(),
        registered_schemes: sim.registry.names(),
    };
    let summary_json =
        serde_json::to_string_pretty(&cc_summary).expect("cc summary serializes");
    Ok(CcResults {
        trace_csv: metrics.flow_csv(flow),
        rows,
        summary: cc_summary,
        summary_json,
        decision_log_text: log.render(),
    })
}
