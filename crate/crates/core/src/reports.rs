//! Agent decision documents: the IFA report and the machine-checkable
//! output contract for reasoner responses.
//!
//! Reasoner output is constrained to a parseable shape: the first
//! non-blank line carries the decision (`DECISION: <a|b|c|d>` for the
//! CC agent, `WEIGHTS: a1=.. a2=.. a3=.. a4=..` for the RA agent), and
//! generated payloads travel in fenced blocks tagged `ccspec` or
//! `sfcplan`. Unknown trailing prose is ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::ObjectiveWeights;
use crate::cc::GeneratedCcSpec;
use crate::nfs::{ProtocolKind, SfcPlan, SfcStep};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("first non-blank line is not a DECISION line")]
    MissingDecisionLine,
    #[error("unknown action `{0}` (expected a, b, c or d)")]
    UnknownAction(String),
    #[error("malformed generated spec: {0}")]
    MalformedGeneratedSpec(String),
    #[error("missing payload for decision: {0}")]
    MissingPayload(String),
    #[error("no WEIGHTS line found")]
    MissingWeightsLine,
    #[error("weight `{0}` is not numeric")]
    NonNumericWeight(String),
    #[error("weight `{0}` is negative")]
    NegativeWeight(String),
    #[error("no fenced sfcplan block found")]
    MissingPlanBlock,
    #[error("chain position {0} appears more than once")]
    DuplicateChainPosition(usize),
    #[error("unknown protocol kind `{0}`")]
    UnknownProtocolKind(String),
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
}

// ---------------------------------------------------------------------------
// IFA report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetQosProfile {
    pub max_latency_ms: f64,
    pub min_throughput_bps: f64,
    /// Fraction in [0, 1].
    pub max_loss_ratio: f64,
    pub max_jitter_ms: f64,
}

impl TargetQosProfile {
    pub fn is_valid(&self) -> bool {
        self.max_latency_ms >= 0.0
            && self.min_throughput_bps >= 0.0
            && (0.0..=1.0).contains(&self.max_loss_ratio)
            && self.max_jitter_ms >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationProfile {
    pub app_type: String,
    pub qos_metrics: Vec<String>,
    pub qoe_metrics: Vec<String>,
    pub target_qos: TargetQosProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEnvironment {
    pub network_technology: String,
    pub mobility: String,
    pub device: String,
    pub os: String,
    pub competing_flows: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedQos {
    pub latency_ms: f64,
    pub jitter_ms: f64,
    pub throughput_bps: f64,
    /// Loss fraction in [0, 1].
    pub loss: f64,
    pub rtt_ms: f64,
    /// Retransmitted fraction in [0, 1].
    pub retransmission_ratio: f64,
    pub cwnd_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPerceivedQuality {
    pub text: String,
    /// Scalar score in [0, 1].
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRequirements {
    pub priorities: Vec<String>,
    pub guidance: String,
}

/// The five-section system snapshot consumed by every decision agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfaReport {
    pub application_profile: ApplicationProfile,
    pub device_environment: DeviceEnvironment,
    pub observed_qos: ObservedQos,
    pub user_perceived_quality: UserPerceivedQuality,
    pub runtime_requirements: RuntimeRequirements,
}

fn pct(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

fn or_na(text: &str) -> &str {
    if text.trim().is_empty() {
        "n/a"
    } else {
        text
    }
}

/// Render a report to prompt-embeddable text. Deterministic:
/// structurally equal reports render to identical bytes.
pub fn render_ifa_report(report: &IfaReport) -> String {
    let ap = &report.application_profile;
    let de = &report.device_environment;
    let oq = &report.observed_qos;
    let uq = &report.user_perceived_quality;
    let rr = &report.runtime_requirements;
    let cwnd = if oq.cwnd_samples.is_empty() {
        "n/a".to_string()
    } else {
        oq.cwnd_samples
            .iter()
            .map(|v| format!("{v:.1}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "# Application Profile\n\
         Application type: {app_type}\n\
         QoS metrics: {qos}\n\
         QoE metrics: {qoe}\n\
         Target QoS: max latency {lat:.1} ms; min throughput {thr:.0} bps; max loss {loss}; max jitter {jit:.1} ms\n\
         \n\
         # Device and Environment\n\
         Network technology: {tech}\n\
         Mobility: {mob}\n\
         Device: {dev}\n\
         OS: {os}\n\
         Competing flows: {flows}\n\
         \n\
         # Observed QoS Metrics\n\
         Latency: {o_lat:.1} ms\n\
         Jitter: {o_jit:.1} ms\n\
         Throughput: {o_thr:.0} bps\n\
         Loss: {o_loss}\n\
         RTT: {o_rtt:.1} ms\n\
         Retransmissions: {o_retx}\n\
         Cwnd samples (pkts): {cwnd}\n\
         \n\
         # User-Perceived Quality\n\
         {uq_text}\n\
         Score: {score:.2}\n\
         \n\
         # Runtime Requirements\n\
         Priorities: {prio}\n\
         Guidance: {guide}\n",
        app_type = or_na(&ap.app_type),
        qos = or_na(&ap.qos_metrics.join(", ")).to_owned(),
        qoe = or_na(&ap.qoe_metrics.join(", ")).to_owned(),
        lat = ap.target_qos.max_latency_ms,
        thr = ap.target_qos.min_throughput_bps,
        loss = pct(ap.target_qos.max_loss_ratio),
        jit = ap.target_qos.max_jitter_ms,
        tech = or_na(&de.network_technology),
        mob = or_na(&de.mobility),
        dev = or_na(&de.device),
        os = or_na(&de.os),
        flows = de.competing_flows,
        o_lat = oq.latency_ms,
        o_jit = oq.jitter_ms,
        o_thr = oq.throughput_bps,
        o_loss = pct(oq.loss),
        o_rtt = oq.rtt_ms,
        o_retx = pct(oq.retransmission_ratio),
        cwnd = cwnd,
        uq_text = or_na(&uq.text),
        score = uq.score,
        prio = or_na(&rr.priorities.join(", ")).to_owned(),
        guide = or_na(&rr.guidance),
    )
}

/// The five section headers, in rendering order.
pub const IFA_SECTION_HEADERS: [&str; 5] = [
    "# Application Profile",
    "# Device and Environment",
    "# Observed QoS Metrics",
    "# User-Perceived Quality",
    "# Runtime Requirements",
];

/// Split a rendered report back into its sections (header, body).
pub fn split_ifa_sections(text: &str) -> Vec<(String, String)> {
    let mut sections: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if line.starts_with("# ") {
            sections.push((line.to_string(), String::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    sections
}

// ---------------------------------------------------------------------------
// CC decision
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CcAction {
    /// (a) keep the current scheme and parameters.
    Keep,
    /// (b) keep the scheme, tune parameters.
    Tune(BTreeMap<String, f64>),
    /// (c) switch to a registered scheme.
    Switch(String),
    /// (d) generate and deploy a new scheme.
    Generate(GeneratedCcSpec),
}

impl CcAction {
    pub fn letter(&self) -> char {
        match self {
            CcAction::Keep => 'a',
            CcAction::Tune(_) => 'b',
            CcAction::Switch(_) => 'c',
            CcAction::Generate(_) => 'd',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcDecision {
    pub action: CcAction,
    pub rationale: String,
    pub step_summaries: Vec<String>,
}

fn extract_fenced_block<'a>(text: &'a str, tag: &str) -> Option<String> {
    let mut body = String::new();
    let mut in_block = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if !in_block {
            if trimmed == format!("```{tag}") {
                in_block = true;
            }
        } else {
            if trimmed == "```" {
                return Some(body);
            }
            body.push_str(line);
            body.push('\n');
        }
    }
    None
}

fn collect_steps(text: &str) -> Vec<String> {
    let mut steps = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("STEP ") {
            if let Some((_, summary)) = rest.split_once(':') {
                steps.push(summary.trim().to_string());
            }
        }
    }
    steps
}

fn collect_rationale(text: &str) -> String {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("RATIONALE:"))
        .map(|s| s.trim().to_string())
        .unwrap_or_default()
}

/// Parse a CC agent response against the output contract.
pub fn parse_cc_decision(text: &str) -> Result<CcDecision, ReportError> {
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or(ReportError::MissingDecisionLine)?;
    let rest = first
        .trim()
        .strip_prefix("DECISION:")
        .ok_or(ReportError::MissingDecisionLine)?;
    let letter = rest.trim();
    let action = match letter {
        "a" => CcAction::Keep,
        "b" => {
            let mut params = BTreeMap::new();
            if let Some(line) = text
                .lines()
                .find_map(|l| l.trim().strip_prefix("TUNE:"))
            {
                for token in line.split_whitespace() {
                    let (name, value) = token.split_once('=').ok_or_else(|| {
                        ReportError::MissingPayload(format!("malformed TUNE token `{token}`"))
                    })?;
                    let value: f64 = value.parse().map_err(|_| {
                        ReportError::MissingPayload(format!("non-numeric TUNE value `{token}`"))
                    })?;
                    params.insert(name.to_string(), value);
                }
            }
            if params.is_empty() {
                return Err(ReportError::MissingPayload(
                    "action b requires a TUNE: line".into(),
                ));
            }
            CcAction::Tune(params)
        }
        "c" => {
            let target = text
                .lines()
                .find_map(|l| l.trim().strip_prefix("SWITCH:"))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| {
                    ReportError::MissingPayload("action c requires a SWITCH: line".into())
                })?;
            CcAction::Switch(target)
        }
        "d" => {
            let body = extract_fenced_block(text, "ccspec").ok_or_else(|| {
                ReportError::MalformedGeneratedSpec("missing ccspec block".into())
            })?;
            let spec = GeneratedCcSpec::parse(&body)
                .map_err(|e| ReportError::MalformedGeneratedSpec(e.to_string()))?;
            CcAction::Generate(spec)
        }
        other => return Err(ReportError::UnknownAction(other.to_string())),
    };
    Ok(CcDecision {
        action,
        rationale: collect_rationale(text),
        step_summaries: collect_steps(text),
    })
}

/// Render a decision back to contract text (inverse of
/// [`parse_cc_decision`]; used by scripted reasoners and round-trip
/// tests).
pub fn render_cc_decision(decision: &CcDecision) -> String {
    let mut out = format!("DECISION: {}\n", decision.action.letter());
    match &decision.action {
        CcAction::Keep => {}
        CcAction::Tune(params) => {
            let tokens: Vec<String> =
                params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!("TUNE: {}\n", tokens.join(" ")));
        }
        CcAction::Switch(target) => out.push_str(&format!("SWITCH: {target}\n")),
        CcAction::Generate(spec) => {
            out.push_str("```ccspec\n");
            out.push_str(&spec.render());
            out.push_str("```\n");
        }
    }
    if !decision.rationale.is_empty() {
        out.push_str(&format!("RATIONALE: {}\n", decision.rationale));
    }
    for (i, step) in decision.step_summaries.iter().enumerate() {
        out.push_str(&format!("STEP {}: {}\n", i + 1, step));
    }
    out
}

// ---------------------------------------------------------------------------
// Weight update
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightUpdate {
    pub weights: ObjectiveWeights,
    pub rationale: String,
    pub step_summaries: Vec<String>,
}

/// Parse an RA agent response: `WEIGHTS: a1=<f> a2=<f> a3=<f> a4=<f>`,
/// re-normalized to sum 1.
pub fn parse_weight_update(text: &str) -> Result<WeightUpdate, ReportError> {
    let line = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("WEIGHTS:"))
        .ok_or(ReportError::MissingWeightsLine)?;
    let mut raw = [None; 4];
    for token in line.split_whitespace() {
        let Some((name, value)) = token.split_once('=') else {
            continue;
        };
        let idx = match name {
            "a1" => 0,
            "a2" => 1,
            "a3" => 2,
            "a4" => 3,
            _ => continue,
        };
        let v: f64 = value
            .parse()
            .map_err(|_| ReportError::NonNumericWeight(token.to_string()))?;
        if v < 0.0 {
            return Err(ReportError::NegativeWeight(token.to_string()));
        }
        raw[idx] = Some(v);
    }
    let vals: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, v)| v.ok_or(ReportError::NonNumericWeight(format!("a{} missing", i + 1))))
        .collect::<Result<_, _>>()?;
    let weights = ObjectiveWeights::new(vals[0], vals[1], vals[2], vals[3])
        .map_err(|_| ReportError::NegativeWeight("all-zero weight vector".into()))?;
    Ok(WeightUpdate {
        weights,
        rationale: collect_rationale(text),
        step_summaries: collect_steps(text),
    })
}

// ---------------------------------------------------------------------------
// SFC plan
// ---------------------------------------------------------------------------

/// Parse a reasoner SFC plan from its fenced `sfcplan` block.
///
/// Body grammar, one entry per line:
///   protocol=<legacy-udp|legacy-tcp|custom>
///   path=<1-based candidate path index>
///   nf.<position>=<NF name>@<node id>
///
/// NF names are resolved against the catalog later, not here.
pub fn parse_sfc_plan(text: &str) -> Result<SfcPlan, ReportError> {
    let body = extract_fenced_block(text, "sfcplan").ok_or(ReportError::MissingPlanBlock)?;
    let mut protocol = None;
    let mut path_index = 1usize;
    let mut positions: BTreeMap<usize, SfcStep> = BTreeMap::new();
    for line in body.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ReportError::MalformedPlan(format!("malformed line `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key == "protocol" {
            protocol = Some(match value {
                "legacy-udp" => ProtocolKind::LegacyUdp,
                "legacy-tcp" => ProtocolKind::LegacyTcp,
                "custom" => ProtocolKind::Custom,
                other => return Err(ReportError::UnknownProtocolKind(other.to_string())),
            });
        } else if key == "path" {
            path_index = value.parse().map_err(|_| {
                ReportError::MalformedPlan(format!("path index `{value}` is not a number"))
            })?;
        } else if let Some(pos) = key.strip_prefix("nf.") {
            let pos: usize = pos.parse().map_err(|_| {
                ReportError::MalformedPlan(format!("position `{key}` is not a number"))
            })?;
            let (name, node) = value.split_once('@').ok_or_else(|| {
                ReportError::MalformedPlan(format!("nf entry `{value}` missing `@node`"))
            })?;
            let step = SfcStep {
                nf_name: name.trim().to_string(),
                node: node.trim().to_string(),
            };
            if positions.insert(pos, step).is_some() {
                return Err(ReportError::DuplicateChainPosition(pos));
            }
        } else {
            return Err(ReportError::MalformedPlan(format!("unknown key `{key}`")));
        }
    }
    let protocol = protocol
        .ok_or_else(|| ReportError::MalformedPlan("missing protocol line".into()))?;
    // Positions must be contiguous from 1.
    for (expected, (&pos, _)) in positions.iter().enumerate() {
        if pos != expected + 1 {
            return Err(ReportError::MalformedPlan(format!(
                "chain positions must be contiguous from 1, found {pos}"
            )));
        }
    }
    Ok(SfcPlan {
        steps: positions.into_values().collect(),
        protocol,
        path_index,
        notes: String::new(),
    })
}

/// Render a plan as a fenced `sfcplan` block (inverse of
/// [`parse_sfc_plan`]).
pub fn render_sfc_plan(plan: &SfcPlan) -> String {
    let mut out = String::from("```sfcplan\n");
    out.push_str(&format!(
        "protocol={}\n",
        match plan.protocol {
            ProtocolKind::LegacyUdp => "legacy-udp",
            ProtocolKind::LegacyTcp => "legacy-tcp",
            ProtocolKind::Custom => "custom",
        }
    ));
    out.push_str(&format!("path={}\n", plan.path_index));
    for (i, step) in plan.steps.iter().enumerate() {
        out.push_str(&format!("nf.{}={}@{}\n", i + 1, step.nf_name, step.node));
    }
    out.push_str("```\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_report() -> IfaReport {
        IfaReport {
            application_profile: ApplicationProfile {
                app_type: "video streaming".into(),
                qos_metrics: vec!["latency".into(), "throughput".into(), "loss".into()],
                qoe_metrics: vec!["stall ratio".into()],
                target_qos: TargetQosProfile {
                    max_latency_ms: 100.0,
                    min_throughput_bps: 1_000_000.0,
                    max_loss_ratio: 0.01,
                    max_jitter_ms: 20.0,
                },
            },
            device_environment: DeviceEnvironment {
                network_technology: "wifi-802.11g".into(),
                mobility: "static".into(),
                device: "laptop".into(),
                os: "linux".into(),
                competing_flows: 3,
            },
            observed_qos: ObservedQos {
                latency_ms: 42.0,
                jitter_ms: 6.5,
                throughput_bps: 5_400_000.0,
                loss: 0.08,
                rtt_ms: 55.0,
                retransmission_ratio: 0.05,
                cwnd_samples: vec![10.0, 14.0, 7.0],
            },
            user_perceived_quality: UserPerceivedQuality {
                text: "occasional stalls".into(),
                score: 0.7,
            },
            runtime_requirements: RuntimeRequirements {
                priorities: vec!["throughput".into(), "loss".into()],
                guidance: "stabilize throughput".into(),
            },
        }
    }

    #[test]
    fn render_shows_loss_percentage() {
        let text = render_ifa_report(&sample_report());
        assert!(text.contains("Loss: 8.0%"));
        let qos_section = text
            .split("# Observed QoS Metrics")
            .nth(1)
            .unwrap()
            .split("# User-Perceived Quality")
            .next()
            .unwrap();
        assert!(qos_section.contains("Loss: 8.0%"));
    }

    #[test]
    fn render_is_deterministic() {
        let a = render_ifa_report(&sample_report());
        let b = render_ifa_report(&sample_report());
        assert_eq!(a, b);
    }

    #[test]
    fn empty_qoe_text_renders_na_and_five_sections() {
        let mut report = sample_report();
        report.user_perceived_quality.text = String::new();
        let text = render_ifa_report(&report);
        let sections = split_ifa_sections(&text);
        assert_eq!(sections.len(), 5);
        assert!(sections[3].1.contains("n/a"));
        for (i, header) in IFA_SECTION_HEADERS.iter().enumerate() {
            assert_eq!(&sections[i].0, header);
        }
    }

    #[test]
    fn decision_a_is_keep() {
        let d = parse_cc_decision("DECISION: a\nsome trailing prose").unwrap();
        assert_eq!(d.action, CcAction::Keep);
    }

    #[test]
    fn decision_d_parses_spec_block() {
        let text = "DECISION: d\n```ccspec\nname=llm_cc_v1\nadditive_increase=2\nbeta=0.8\nrtt_threshold=1.2\npacing_gain=1.1\nrtt_sensitivity=0.5\n```\nRATIONALE: blended design\nSTEP 1: looked\n";
        let d = parse_cc_decision(text).unwrap();
        match &d.action {
            CcAction::Generate(spec) => assert_eq!(spec.name, "llm_cc_v1"),
            other => panic!("expected generate, got {other:?}"),
        }
        assert_eq!(d.rationale, "blended design");
        assert_eq!(d.step_summaries, vec!["looked"]);
    }

    #[test]
    fn decision_q_is_unknown_action() {
        assert_eq!(
            parse_cc_decision("DECISION: q"),
            Err(ReportError::UnknownAction("q".into()))
        );
    }

    #[test]
    fn missing_decision_line_is_an_error() {
        assert_eq!(
            parse_cc_decision("I think we should keep the scheme"),
            Err(ReportError::MissingDecisionLine)
        );
        assert_eq!(parse_cc_decision("  \n \n"), Err(ReportError::MissingDecisionLine));
    }

    #[test]
    fn cc_decision_round_trips() {
        let decisions = vec![
            CcDecision {
                action: CcAction::Keep,
                rationale: "fine as is".into(),
                step_summaries: (1..=8).map(|i| format!("step {i}")).collect(),
            },
            CcDecision {
                action: CcAction::Tune(BTreeMap::from([("pacing".into(), 1.5)])),
                rationale: "nudge pacing".into(),
                step_summaries: vec![],
            },
            CcDecision {
                action: CcAction::Switch("cubic_lite".into()),
                rationale: "".into(),
                step_summaries: vec!["a".into()],
            },
            CcDecision {
                action: CcAction::Generate(GeneratedCcSpec {
                    name: "llm_cc_v2".into(),
                    additive_increase: 3.0,
                    beta: 0.85,
                    rtt_threshold: 1.3,
                    pacing_gain: 1.0,
                    rtt_sensitivity: 0.4,
                }),
                rationale: "refined".into(),
                step_summaries: vec![],
            },
        ];
        for d in decisions {
            let parsed = parse_cc_decision(&render_cc_decision(&d)).unwrap();
            assert_eq!(parsed, d);
        }
    }

    #[test]
    fn parsers_never_panic_on_arbitrary_text() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        runner
            .run(&any::<String>(), |text| {
                let _ = parse_cc_decision(&text);
                let _ = parse_weight_update(&text);
                let _ = parse_sfc_plan(&text);
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn weights_parse_directly() {
        let u = parse_weight_update("WEIGHTS: a1=0.1 a2=0.5 a3=0.2 a4=0.2").unwrap();
        assert_eq!(u.weights.as_array(), [0.1, 0.5, 0.2, 0.2]);
    }

    #[test]
    fn weights_renormalize_to_sum_one() {
        let u = parse_weight_update("WEIGHTS: a1=1 a2=1 a3=1 a4=1").unwrap();
        assert_eq!(u.weights.as_array(), [0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn negative_weight_rejected() {
        assert_eq!(
            parse_weight_update("WEIGHTS: a1=-1 a2=1 a3=1 a4=1"),
            Err(ReportError::NegativeWeight("a1=-1".into()))
        );
        assert_eq!(
            parse_weight_update("WEIGHTS: a1=x a2=1 a3=1 a4=1"),
            Err(ReportError::NonNumericWeight("a1=x".into()))
        );
        assert_eq!(
            parse_weight_update("no weights here"),
            Err(ReportError::MissingWeightsLine)
        );
    }

    #[test]
    fn three_nf_plan_parses() {
        let text = "plan follows\n```sfcplan\nprotocol=custom\npath=1\nnf.1=QoS Enforcer@n3\nnf.2=Transport Assistant@n5\nnf.3=Packet Forwarder@n7\n```\n";
        let plan = parse_sfc_plan(text).unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.protocol, ProtocolKind::Custom);
        assert_eq!(plan.steps[0].nf_name, "QoS Enforcer");
        assert_eq!(plan.steps[2].node, "n7");
    }

    #[test]
    fn empty_chain_pass_through_is_valid() {
        let plan = parse_sfc_plan("```sfcplan\nprotocol=legacy-udp\n```").unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(plan.protocol, ProtocolKind::LegacyUdp);
    }

    #[test]
    fn duplicate_position_rejected() {
        let text = "```sfcplan\nprotocol=custom\nnf.1=A@n1\nnf.1=B@n2\n```";
        assert_eq!(
            parse_sfc_plan(text),
            Err(ReportError::DuplicateChainPosition(1))
        );
    }

    #[test]
    fn unknown_protocol_rejected() {
        let text = "```sfcplan\nprotocol=carrier-pigeon\n```";
        assert_eq!(
            parse_sfc_plan(text),
            Err(ReportError::UnknownProtocolKind("carrier-pigeon".into()))
        );
        assert_eq!(parse_sfc_plan("no block"), Err(ReportError::MissingPlanBlock));
    }

    #[test]
    fn sfc_plan_round_trips() {
        let text = "```sfcplan\nprotocol=custom\npath=2\nnf.1=QoS Enforcer@n3\nnf.2=Packet Forwarder@n4\n```";
        let plan = parse_sfc_plan(text).unwrap();
        let again = parse_sfc_plan(&render_sfc_plan(&plan)).unwrap();
        assert_eq!(plan, again);
    }
}
