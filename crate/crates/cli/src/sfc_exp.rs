//! Three-way transport comparison: the agent-planned chain with the
//! selective-reliability transport, a constant-rate fire-and-forget
//! baseline, and a fully-reliable window-governed baseline, all over
//! the same seeded topology with a lossy access link.

use std::collections::BTreeMap;

use chainsim::agents::{sfc_agent_plan, DecisionLog, Reasoner};
use chainsim::allocator::{CandidatePath, RaReport};
use chainsim::netsim::{FlowKind, FlowSpec, SimTopology, Simulator};
use chainsim::nfs::{compose_chain, default_catalog, BehaviorConfig};
use chainsim::proto::SenderConfig;
use chainsim::reports::{IfaReport, ObservedQos};
use serde::Serialize;

use crate::config::SfcConfig;
use crate::{profile, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub reliable_delivery: f64,
    pub best_effort_delivery: f64,
    pub overall_delivery: f64,
    pub fct_s: Option<f64>,
    pub mean_send_rate_bps: f64,
    pub retransmissions: u64,
}

#[derive(Debug)]
pub struct SfcResults {
    pub rows: Vec<ScenarioRow>,
    /// Per-scenario per-second trace CSV.
    pub traces: BTreeMap<String, String>,
    pub decision_log_text: String,
    pub summary_json: String,
}

impl SfcResults {
    pub fn row(&self, scenario: &str) -> &ScenarioRow {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario)
            .expect("known scenario")
    }

    pub fn output_files(&self) -> Vec<(String, String)> {
        let mut files = vec![("sfc_summary.json".to_string(), self.summary_json.clone())];
        for (name, csv) in &self.traces {
            files.push((format!("sfc_{name}.csv"), csv.clone()));
        }
        files.push(("decisions.log".to_string(), self.decision_log_text.clone()));
        files
    }
}

fn topology(cfg: &SfcConfig) -> SimTopology {
    let mut t = SimTopology::linear(
        cfg.switches,
        cfg.link_rate_bps,
        cfg.link_delay_us,
        0.0,
        cfg.queue_cap,
    );
    t.links[0].loss = cfg.access_loss;
    t
}

/// Pre-deployment situation report driving the planning agent.
fn planning_report(cfg: &SfcConfig) -> IfaReport {
    IfaReport {
        application_profile: profile::application_profile(),
        device_environment: profile::device_environment(),
        observed_qos: ObservedQos {
            latency_ms: cfg.link_delay_us as f64 / 1000.0 * (cfg.switches + 1) as f64,
            jitter_ms: 2.0,
            throughput_bps: cfg.rate_bps,
            loss: cfg.access_loss,
            rtt_ms: cfg.link_delay_us as f64 / 500.0 * (cfg.switches + 1) as f64,
            retransmission_ratio: 0.0,
            cwnd_samples: Vec::new(),
        },
        user_perceived_quality: profile::perceived_quality(
            "control actions intermittently ignored; media playback acceptable",
            0.4,
        ),
        runtime_requirements: profile::runtime_requirements(),
    }
}

/// Candidate-path listing for the linear topology (a single path).
fn path_report(cfg: &SfcConfig) -> RaReport {
    let mut nodes = vec!["src".to_string()];
    for i in 1..=cfg.switches {
        nodes.push(format!("s{i}"));
    }
    nodes.push("dst".to_string());
    let free_instances = vec![4; nodes.len()];
    RaReport {
        source: "src".into(),
        destination: "dst".into(),
        paths: vec![CandidatePath {
            latency_us: cfg.link_delay_us * (cfg.switches + 1) as u64,
            free_instances,
            free_bandwidth_bps: cfg.link_rate_bps,
            nodes,
        }],
    }
}

pub fn run_sfc_experiment(
    cfg: &SfcConfig,
    seed: u64,
    reasoner: &mut dyn Reasoner,
) -> Result<SfcResults, CliError> {
    let mut log = DecisionLog::default();
    let catalog = default_catalog();
    let ifa = planning_report(cfg);
    let ra_report = path_report(cfg);
    let plan = sfc_agent_plan(&ifa, &catalog, &ra_report, reasoner, 0, &mut log)?;
    let path_nodes = &ra_report.paths[plan.path_index - 1].nodes;
    let chain = compose_chain(&plan, &catalog, path_nodes, &BehaviorConfig::default())?;

    let mut rows = Vec::new();
    let mut traces = BTreeMap::new();

    // Agent-planned chain with the selective-reliability transport.
    {
        let mut sim = Simulator::new(topology(cfg), seed)?;
        let flow = sim.add_flow(FlowSpec {
            src: "src".into(),
            dst: "dst".into(),
            start_us: 0,
            kind: FlowKind::Custom {
                messages: cfg.messages,
                payload_len: cfg.payload_len,
                reliable_ratio: cfg.reliable_fraction,
                config: SenderConfig {
                    pacing_rate_bps: cfg.pacing_rate_bps as u64,
                    ..SenderConfig::default()
                },
                ack_every: cfg.ack_every,
            },
            use_chain: true,
        })?;
        sim.install_chain(chain, flow)?;
        let metrics = sim.run(cfg.run_seconds * 1_000_000)?;
        let summary = &metrics.flows[&flow];
        let stats = summary.custom.as_ref().ok_or_else(|| {
            CliError::Config("selective-reliability flow did not complete within the run".into())
        })?;
        let offered = stats.offered_reliable + stats.offered_best_effort;
        let delivered = stats.delivered_reliable + stats.delivered_best_effort;
        rows.push(ScenarioRow {
            scenario: "custom".into(),
            reliable_delivery: stats.reliable_ratio(),
            best_effort_delivery: stats.best_effort_ratio(),
            overall_delivery: delivered as f64 / offered as f64,
            fct_s: Some(stats.flow_completion_time_s),
            mean_send_rate_bps: stats.mean_send_rate_bps(),
            retransmissions: stats.retransmissions,
        });
        traces.insert("custom".to_string(), metrics.flow_csv(flow));
    }

    // Constant-rate fire-and-forget baseline.
    {
        let mut sim = Simulator::new(topology(cfg), seed)?;
        let flow = sim.add_flow(FlowSpec {
            src: "src".into(),
            dst: "dst".into(),
            start_us: 0,
            kind: FlowKind::Udp {
                messages: cfg.messages,
                payload_len: cfg.payload_len,
                rate_bps: cfg.rate_bps,
            },
            use_chain: false,
        })?;
        let metrics = sim.run(cfg.run_seconds * 1_000_000)?;
        let summary = &metrics.flows[&flow];
        let send_duration_s =
            cfg.messages as f64 * cfg.payload_len as f64 * 8.0 / cfg.rate_bps;
        rows.push(ScenarioRow {
            scenario: "udp".into(),
            reliable_delivery: summary.delivery_ratio,
            best_effort_delivery: summary.delivery_ratio,
            overall_delivery: summary.delivery_ratio,
            fct_s: Some(send_duration_s),
            mean_send_rate_bps: cfg.rate_bps,
            retransmissions: 0,
        });
        traces.insert("udp".to_string(), metrics.flow_csv(flow));
    }

    // Fully-reliable window-governed baseline.
    {
        let mut sim = Simulator::new(topology(cfg), seed)?;
        let flow = sim.add_flow(FlowSpec {
            src: "src".into(),
            dst: "dst".into(),
            start_us: 0,
            kind: FlowKind::Tcp {
                packets: Some(cfg.messages),
                payload_len: cfg.payload_len,
                scheme: "reno".into(),
            },
            use_chain: false,
        })?;
        let metrics = sim.run(cfg.tcp_run_seconds * 1_000_000)?;
        let summary = &metrics.flows[&flow];
        let mean_rate = match summary.flow_completion_time_s {
            Some(fct) if fct > 0.0 => summary.delivered_bytes as f64 * 8.0 / fct,
            _ => 0.0,
        };
        rows.push(ScenarioRow {
            scenario: "tcp".into(),
            reliable_delivery: summary.delivery_ratio,
            best_effort_delivery: summary.delivery_ratio,
            overall_delivery: summary.delivery_ratio,
            fct_s: summary.flow_completion_time_s,
            mean_send_rate_bps: mean_rate,
            retransmissions: summary.retransmissions,
        });
        traces.insert("tcp".to_string(), metrics.flow_csv(flow));
    }

    let summary_json =
        serde_json::to_string_pretty(&rows).expect("scenario rows serialize");
    Ok(SfcResults {
        rows,
        traces,
        decision_log_text: log.render(),
        summary_json,
    })
}
