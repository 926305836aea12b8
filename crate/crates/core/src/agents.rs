//! The agent layer: a pluggable reasoner abstraction, prompt templates
//! with placeholder instantiation, report fusion, and the three
//! decision loops (congestion control, resource-allocation weights, SFC
//! planning).
//!
//! Fail-safe contract: no reasoner output, however malformed, can crash
//! a loop or corrupt connection/allocator state. The CC and RA loops
//! fall back to the status quo and log the raw output; the SFC loop
//! rejects the admission (a plan is load-bearing, a refinement is not).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::allocator::{MetricsWindow, ObjectiveWeights, RaReport};
use crate::cc::{build_generated_scheme, CcConnection, SchemeRegistry};
use crate::nfs::{Catalog, SfcPlan};
use crate::reports::{
    parse_cc_decision, parse_sfc_plan, parse_weight_update, render_ifa_report, CcAction,
    CcDecision, IfaReport, ObservedQos,
};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("no QoS samples in the evaluation window")]
    NoSamples,
    #[error("unresolved placeholder in instantiated prompt: {0}")]
    UnresolvedPlaceholder(String),
    #[error("script exhausted for tag `{0}`")]
    ScriptExhausted(String),
    #[error("plan rejected: {0}")]
    PlanRejected(String),
    #[error("reasoner transport failure: {0}")]
    Transport(String),
    #[error("malformed script: {0}")]
    MalformedScript(String),
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub system: String,
    pub step_count: usize,
    pub placeholders: Vec<&'static str>,
}

impl PromptTemplate {
    /// Replace every declared placeholder and verify nothing unresolved
    /// remains.
    pub fn instantiate(&self, values: &[(&str, &str)]) -> Result<String, AgentError> {
        let mut text = self.system.clone();
        for (key, value) in values {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        if let Some(pos) = text.find('{') {
            let tail: String = text[pos..].chars().take(32).collect();
            return Err(AgentError::UnresolvedPlaceholder(tail));
        }
        Ok(text)
    }

    pub fn cc_agent() -> Self {
        PromptTemplate {
            id: "cc-agent",
            step_count: 8,
            placeholders: vec!["IFA_REPORT"],
            system: "\
You are the Congestion Control Agent. You manage the congestion control \
scheme of a live connection and are consulted at a fixed evaluation \
interval. Follow this 8-step reasoning process:
STEP 1: Read the application profile and its target QoS.
STEP 2: Read the device and environment section.
STEP 3: Read the observed QoS metrics of the last interval.
STEP 4: Read the user-perceived quality assessment.
STEP 5: Diagnose the dominant performance limiter (loss, latency, or rate).
STEP 6: Evaluate whether the current scheme addresses that limiter.
STEP 7: Consider the available actions: (a) keep the current scheme, \
(b) keep the scheme but tune its parameters, (c) switch to another \
registered scheme, (d) generate a new scheme tailored to the situation.
STEP 8: Commit to exactly one action.
Output contract: the first non-blank line must be `DECISION: <a|b|c|d>`. \
Action b requires a `TUNE: key=value ...` line; action c requires a \
`SWITCH: <scheme>` line; action d requires a fenced ```ccspec block \
with lines name=, additive_increase=, beta=, rtt_threshold=, \
pacing_gain=, rtt_sensitivity=. Add a `RATIONALE: <one line>` and \
optional `STEP n: <summary>` lines.

Current situation report:
{IFA_REPORT}"
                .into(),
        }
    }

    pub fn sfc_agent() -> Self {
        PromptTemplate {
            id: "sfc-agent",
            step_count: 9,
            placeholders: vec!["IFA_REPORT", "NF_CATALOG", "RA_REPORT"],
            system: "\
You are the SFC & Protocol Agent. You design the service function \
chain and the transport protocol for a newly admitted application \
flow. Follow this 9-step reasoning process:
STEP 1: Read the application profile and its target QoS.
STEP 2: Read the device and environment section.
STEP 3: Read the observed QoS metrics.
STEP 4: Read the user-perceived quality assessment.
STEP 5: Read the runtime requirements and priorities.
STEP 6: Study the NF catalog below.
STEP 7: Study the candidate paths and free resources below.
STEP 8: Choose the protocol (legacy-udp, legacy-tcp, or the custom \
selective-reliability protocol) and the NFs, from the catalog and/or \
newly designed, that best satisfy the requirements.
STEP 9: Place each NF on a node of one candidate path, in traversal \
order, and commit the plan.
Output contract: emit one fenced ```sfcplan block with lines \
protocol=<legacy-udp|legacy-tcp|custom>, path=<n>, and \
nf.<position>=<NF name>@<node id> with contiguous positions from 1. \
Add a `RATIONALE: <one line>` and optional `STEP n: <summary>` lines.

Current situation report:
{IFA_REPORT}

NF catalog:
{NF_CATALOG}

Candidate paths:
{RA_REPORT}"
                .into(),
        }
    }

    pub fn ra_agent() -> Self {
        PromptTemplate {
            id: "ra-agent",
            step_count: 3,
            placeholders: vec!["CURRENT_WEIGHTS", "STATS_24H"],
            system: "\
You are the Resource Allocation Agent. Once per 24-hour window you \
review infrastructure-wide metrics and recommend updated weight values \
for the four-term placement objective (a1 cost, a2 profit, a3 \
utilization and fairness, a4 green penalty). Follow this structured \
three-step reasoning process:
STEP 1: Analyze the aggregated 24-hour metrics below against the \
provider's goals.
STEP 2: Identify which objective terms are under- or over-served.
STEP 3: Recommend the updated weight vector.
Output contract: the first non-blank line must be \
`WEIGHTS: a1=<f> a2=<f> a3=<f> a4=<f>` (non-negative, not all zero). \
Add a `RATIONALE: <one line>` and optional `STEP n: <summary>` lines.

Current weights:
{CURRENT_WEIGHTS}

Aggregated metrics of the last 24 hours:
{STATS_24H}"
                .into(),
        }
    }
}

/// Prompt-embeddable rendering of a weight vector.
pub fn render_weights(w: &ObjectiveWeights) -> String {
    let [a1, a2, a3, a4] = w.as_array();
    format!("a1={a1:.4} a2={a2:.4} a3={a3:.4} a4={a4:.4}")
}

/// Prompt-embeddable rendering of a closed 24 h metrics window.
pub fn render_stats_window(w: &MetricsWindow) -> String {
    format!(
        "window: minutes {}..{}\n\
         mean arrival rate: {:.2} SFC/min\n\
         acceptance ratio: {:.4}\n\
         mean cost: {:.2} $/min\n\
         mean revenue: {:.2} $/min\n\
         mean green penalty: {:.2} $/min\n\
         mean profit: {:.2} $/min\n\
         mean utilization: {:.4}\n\
         mean fairness: {:.4}\n",
        w.start_minute,
        w.end_minute,
        w.mean_arrival_rate_per_min,
        w.acceptance_ratio,
        w.mean_cost_per_min,
        w.mean_revenue_per_min,
        w.mean_green_per_min,
        w.mean_profit_per_min,
        w.mean_utilization,
        w.mean_fairness
    )
}

// ---------------------------------------------------------------------------
// Reasoners
// ---------------------------------------------------------------------------

/// A completion backend. `tag` is the prompt template id, letting
/// scripted backends key their cursors per agent.
pub trait Reasoner {
    fn label(&self) -> &str;
    fn complete(&mut self, tag: &str, system: &str, user: &str) -> Result<String, AgentError>;
}

/// Deterministic offline reasoner: an ordered list of (tag, response)
/// entries consumed per-tag in order.
pub struct ScriptedReasoner {
    entries: Vec<(String, String)>,
    cursors: BTreeMap<String, usize>,
}

impl ScriptedReasoner {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        ScriptedReasoner {
            entries,
            cursors: BTreeMap::new(),
        }
    }
}

impl Reasoner for ScriptedReasoner {
    fn label(&self) -> &str {
        "scripted"
    }

    fn complete(&mut self, tag: &str, _system: &str, _user: &str) -> Result<String, AgentError> {
        let cursor = self.cursors.entry(tag.to_string()).or_insert(0);
        let found = self
            .entries
            .iter()
            .filter(|(t, _)| t == tag)
            .nth(*cursor)
            .map(|(_, r)| r.clone());
        match found {
            Some(response) => {
                *cursor += 1;
                Ok(response)
            }
            None => Err(AgentError::ScriptExhausted(tag.to_string())),
        }
    }
}

/// Script file format: blocks introduced by a line `@<tag>`; all
/// following lines up to the next `@` line (or EOF) are the response.
pub fn parse_script(text: &str) -> Result<Vec<(String, String)>, AgentError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, String)> = None;
    for line in text.lines() {
        if let Some(tag) = line.strip_prefix('@') {
            if let Some(done) = current.take() {
                entries.push(done);
            }
            let tag = tag.trim();
            if tag.is_empty() {
                return Err(AgentError::MalformedScript("empty tag after `@`".into()));
            }
            current = Some((tag.to_string(), String::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(AgentError::MalformedScript(format!(
                "content before first `@tag`: `{line}`"
            )));
        }
    }
    if let Some(done) = current.take() {
        entries.push(done);
    }
    Ok(entries)
}

/// Inverse of [`parse_script`].
pub fn render_script(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (tag, body) in entries {
        out.push_str(&format!("@{tag}\n"));
        out.push_str(body);
        if !body.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Wraps another reasoner and records every (tag, response) so a live
/// session can be replayed offline via [`ScriptedReasoner`].
pub struct RecordingReasoner<R: Reasoner> {
    inner: R,
    pub transcript: Vec<(String, String)>,
}

impl<R: Reasoner> RecordingReasoner<R> {
    pub fn new(inner: R) -> Self {
        RecordingReasoner {
            inner,
            transcript: Vec::new(),
        }
    }
}

impl<R: Reasoner> Reasoner for RecordingReasoner<R> {
    fn label(&self) -> &str {
        "recording"
    }

    fn complete(&mut self, tag: &str, system: &str, user: &str) -> Result<String, AgentError> {
        let response = self.inner.complete(tag, system, user)?;
        self.transcript.push((tag.to_string(), response.clone()));
        Ok(response)
    }
}

/// Chat-completion HTTP backend. Configuration comes from the
/// environment: REASONER_BASE_URL, REASONER_API_KEY, REASONER_MODEL.
/// Any transport or decode error surfaces as `Transport`, which every
/// loop treats as its fail-safe path.
pub struct HttpReasoner {
    base_url: String,
    api_key: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpReasoner {
    pub fn from_env() -> Result<Self, AgentError> {
        let base_url = std::env::var("REASONER_BASE_URL")
            .map_err(|_| AgentError::Transport("REASONER_BASE_URL not set".into()))?;
        let api_key = std::env::var("REASONER_API_KEY").unwrap_or_default();
        let model = std::env::var("REASONER_MODEL")
            .map_err(|_| AgentError::Transport("REASONER_MODEL not set".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(HttpReasoner {
            base_url,
            api_key,
            model,
            client,
        })
    }
}

impl Reasoner for HttpReasoner {
    fn label(&self) -> &str {
        "http"
    }

    fn complete(&mut self, _tag: &str, system: &str, user: &str) -> Result<String, AgentError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url.trim_end_matches('/')))
            .json(&body);
        if !self.api_key.is_empty() {
            req = req.bearer_auth(&self.api_key);
        }
        let resp: serde_json::Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| AgentError::Transport(e.to_string()))?
            .json()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| AgentError::Transport("no message content in response".into()))
    }
}

// ---------------------------------------------------------------------------
// Decision log
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub at_us: u64,
    pub agent: String,
    pub outcome: String,
    pub raw: String,
}

/// Append-only record of every agent consultation.
#[derive(Debug, Default)]
pub struct DecisionLog {
    entries: Vec<LogEntry>,
}

impl DecisionLog {
    pub fn append(&mut self, at_us: u64, agent: &str, outcome: &str, raw: &str) {
        self.entries.push(LogEntry {
            at_us,
            agent: agent.to_string(),
            outcome: outcome.to_string(),
            raw: raw.to_string(),
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "[t={:.1}s] {} -> {}\n{}\n---\n",
                e.at_us as f64 / 1e6,
                e.agent,
                e.outcome,
                e.raw.trim_end()
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Report fusion
// ---------------------------------------------------------------------------

/// Fold an evaluation window of QoS samples plus static profile
/// sections into one situation report. Numeric series are averaged;
/// window-level series are concatenated.
pub fn fuse_reports(
    qos_samples: &[ObservedQos],
    app: crate::reports::ApplicationProfile,
    env: crate::reports::DeviceEnvironment,
    qoe: crate::reports::UserPerceivedQuality,
    runtime: crate::reports::RuntimeRequirements,
) -> Result<IfaReport, AgentError> {
    if qos_samples.is_empty() {
        return Err(AgentError::NoSamples);
    }
    let n = qos_samples.len() as f64;
    let mean = |f: fn(&ObservedQos) -> f64| qos_samples.iter().map(f).sum::<f64>() / n;
    let observed = ObservedQos {
        latency_ms: mean(|s| s.latency_ms),
        jitter_ms: mean(|s| s.jitter_ms),
        throughput_bps: mean(|s| s.throughput_bps),
        loss: mean(|s| s.loss),
        rtt_ms: mean(|s| s.rtt_ms),
        retransmission_ratio: mean(|s| s.retransmission_ratio),
        cwnd_samples: qos_samples
            .iter()
            .flat_map(|s| s.cwnd_samples.iter().copied())
            .collect(),
    };
    Ok(IfaReport {
        application_profile: app,
        device_environment: env,
        observed_qos: observed,
        user_perceived_quality: qoe,
        runtime_requirements: runtime,
    })
}

// ---------------------------------------------------------------------------
// Decision loops
// ---------------------------------------------------------------------------

/// Consult the CC agent and apply its decision to the live connection.
///
/// Never fails: reasoner or parse failures degrade to "keep", with the
/// raw output logged. A switch to an unknown scheme likewise keeps the
/// current scheme.
pub fn cc_agent_evaluate(
    ifa: &IfaReport,
    reasoner: &mut dyn Reasoner,
    registry: &mut SchemeRegistry,
    conn: &mut CcConnection,
    now_us: u64,
    log: &mut DecisionLog,
) -> CcDecision {
    let template = PromptTemplate::cc_agent();
    let report = render_ifa_report(ifa);
    let keep = |log: &mut DecisionLog, raw: &str, why: &str| {
        log.append(now_us, "cc-agent", &format!("keep (fail-safe: {why})"), raw);
        CcDecision {
            action: CcAction::Keep,
            rationale: format!("fail-safe: {why}"),
            step_summaries: Vec::new(),
        }
    };
    let prompt = match template.instantiate(&[("IFA_REPORT", report.as_str())]) {
        Ok(p) => p,
        Err(e) => return keep(log, "", &e.to_string()),
    };
    let raw = match reasoner.complete(template.id, &prompt, "Evaluate now.") {
        Ok(r) => r,
        Err(e) => return keep(log, "", &e.to_string()),
    };
    let decision = match parse_cc_decision(&raw) {
        Ok(d) => d,
        Err(e) => return keep(log, &raw, &e.to_string()),
    };
    let outcome = match &decision.action {
        CcAction::Keep => "keep".to_string(),
        CcAction::Tune(params) => {
            // Parameter tuning is applied to the window state where the
            // key is recognized; unknown keys are logged only.
            for (k, v) in params {
                match k.as_str() {
                    "cwnd" => conn.state.cwnd = v.max(crate::cc::MIN_CWND),
                    "ssthresh" => conn.state.ssthresh = v.max(crate::cc::MIN_SSTHRESH),
                    _ => {}
                }
            }
            format!("tune {params:?}")
        }
        CcAction::Switch(name) => match conn.swap_scheme(registry, name, now_us) {
            Ok(()) => format!("switch to {name}"),
            Err(e) => {
                return keep(log, &raw, &e.to_string());
            }
        },
        CcAction::Generate(spec) => {
            let name = spec.name.clone();
            match build_generated_scheme(spec.clone()) {
                Ok(scheme) => {
                    // Re-generation under an existing name keeps the
                    // registered original; the swap still proceeds.
                    let _ = registry.register(scheme);
                    match conn.swap_scheme(registry, &name, now_us) {
                        Ok(()) => format!("generate + switch to {name}"),
                        Err(e) => return keep(log, &raw, &e.to_string()),
                    }
                }
                Err(e) => return keep(log, &raw, &e.to_string()),
            }
        }
    };
    log.append(now_us, "cc-agent", &outcome, &raw);
    decision
}

/// Consult the RA agent for a new weight vector. Failures retain the
/// current weights.
pub fn ra_agent_evaluate(
    window: &MetricsWindow,
    current: ObjectiveWeights,
    reasoner: &mut dyn Reasoner,
    now_us: u64,
    log: &mut DecisionLog,
) -> ObjectiveWeights {
    let template = PromptTemplate::ra_agent();
    let stats = render_stats_window(window);
    let current_text = render_weights(&current);
    let retain = |log: &mut DecisionLog, raw: &str, why: &str| {
        log.append(
            now_us,
            "ra-agent",
            &format!("retain weights (fail-safe: {why})"),
            raw,
        );
        current
    };
    let prompt = match template.instantiate(&[
        ("CURRENT_WEIGHTS", current_text.as_str()),
        ("STATS_24H", stats.as_str()),
    ]) {
        Ok(p) => p,
        Err(e) => return retain(log, "", &e.to_string()),
    };
    let raw = match reasoner.complete(template.id, &prompt, "Evaluate now.") {
        Ok(r) => r,
        Err(e) => return retain(log, "", &e.to_string()),
    };
    match parse_weight_update(&raw) {
        Ok(update) => {
            log.append(
                now_us,
                "ra-agent",
                &format!("weights {}", render_weights(&update.weights)),
                &raw,
            );
            update.weights
        }
        Err(e) => retain(log, &raw, &e.to_string()),
    }
}

/// Consult the SFC agent for an admission plan. Any failure rejects the
/// admission — there is no silent fallback.
pub fn sfc_agent_plan(
    ifa: &IfaReport,
    catalog: &Catalog,
    ra_report: &RaReport,
    reasoner: &mut dyn Reasoner,
    now_us: u64,
    log: &mut DecisionLog,
) -> Result<SfcPlan, AgentError> {
    if ra_report.paths.is_empty() {
        return Err(AgentError::PlanRejected("no candidate paths".into()));
    }
    let template = PromptTemplate::sfc_agent();
    let prompt = template
        .instantiate(&[
            ("IFA_REPORT", render_ifa_report(ifa).as_str()),
            ("NF_CATALOG", catalog.render().as_str()),
            ("RA_REPORT", ra_report.render().as_str()),
        ])
        .map_err(|e| AgentError::PlanRejected(e.to_string()))?;
    let raw = reasoner
        .complete(template.id, &prompt, "Plan now.")
        .map_err(|e| AgentError::PlanRejected(e.to_string()))?;
    let plan = parse_sfc_plan(&raw).map_err(|e| {
        log.append(now_us, "sfc-agent", "rejected (parse failure)", &raw);
        AgentError::PlanRejected(e.to_string())
    })?;
    let validated = validate_plan(&plan, catalog, ra_report);
    match validated {
        Ok(()) => {
            log.append(
                now_us,
                "sfc-agent",
                &format!(
                    "plan with {} NFs on path {}",
                    plan.steps.len(),
                    plan.path_index
                ),
                &raw,
            );
            Ok(plan)
        }
        Err(reason) => {
            log.append(now_us, "sfc-agent", &format!("rejected ({reason})"), &raw);
            Err(AgentError::PlanRejected(reason))
        }
    }
}

fn validate_plan(plan: &SfcPlan, catalog: &Catalog, ra_report: &RaReport) -> Result<(), String> {
    if plan.path_index == 0 || plan.path_index > ra_report.paths.len() {
        return Err(format!(
            "path index {} outside 1..={}",
            plan.path_index,
            ra_report.paths.len()
        ));
    }
    let path = &ra_report.paths[plan.path_index - 1];
    let mut cursor = 0usize;
    for step in &plan.steps {
        if catalog.get(&step.nf_name).is_none() {
            return Err(format!("NF `{}` not in catalog", step.nf_name));
        }
        match path.nodes[cursor..].iter().position(|n| *n == step.node) {
            Some(p) => cursor += p,
            None => {
                return Err(format!(
                    "node `{}` not on path {} in traversal order",
                    step.node, plan.path_index
                ))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::GeneratedCcSpec;
    use crate::nfs::default_catalog;
    use crate::reports::{
        ApplicationProfile, DeviceEnvironment, RuntimeRequirements, TargetQosProfile,
        UserPerceivedQuality,
    };

    fn sample_profile() -> (
        ApplicationProfile,
        DeviceEnvironment,
        UserPerceivedQuality,
        RuntimeRequirements,
    ) {
        (
            ApplicationProfile {
                app_type: "interactive video".into(),
                qos_metrics: vec!["latency".into(), "loss".into()],
                qoe_metrics: vec!["smoothness".into()],
                target_qos: TargetQosProfile {
                    max_latency_ms: 100.0,
                    min_throughput_bps: 1e6,
                    max_loss_ratio: 0.01,
                    max_jitter_ms: 20.0,
                },
            },
            DeviceEnvironment {
                network_technology: "wireless LAN".into(),
                mobility: "stationary".into(),
                device: "laptop".into(),
                os: "linux".into(),
                competing_flows: 3,
            },
            UserPerceivedQuality {
                text: "occasional stutter".into(),
                score: 3.5,
            },
            RuntimeRequirements {
                priorities: vec!["loss".into()],
                guidance: "reliability first".into(),
            },
        )
    }

    fn qos(loss: f64) -> ObservedQos {
        ObservedQos {
            latency_ms: 20.0,
            jitter_ms: 2.0,
            throughput_bps: 9e5,
            loss,
            rtt_ms: 40.0,
            retransmission_ratio: 0.01,
            cwnd_samples: vec![10.0],
        }
    }

    fn sample_ifa() -> IfaReport {
        let (app, env, qoe, run) = sample_profile();
        fuse_reports(&[qos(0.02)], app, env, qoe, run).unwrap()
    }

    #[test]
    fn templates_declare_their_placeholders() {
        for t in [
            PromptTemplate::cc_agent(),
            PromptTemplate::sfc_agent(),
            PromptTemplate::ra_agent(),
        ] {
            for p in &t.placeholders {
                assert!(
                    t.system.contains(&format!("{{{p}}}")),
                    "{} missing {{{p}}}",
                    t.id
                );
            }
        }
    }

    #[test]
    fn template_step_counts() {
        assert_eq!(PromptTemplate::cc_agent().step_count, 8);
        assert_eq!(PromptTemplate::sfc_agent().step_count, 9);
        assert_eq!(PromptTemplate::ra_agent().step_count, 3);
        for t in [
            PromptTemplate::cc_agent(),
            PromptTemplate::sfc_agent(),
            PromptTemplate::ra_agent(),
        ] {
            let steps = t
                .system
                .lines()
                .filter(|l| l.starts_with("STEP "))
                .count();
            assert_eq!(steps, t.step_count, "{}", t.id);
        }
    }

    #[test]
    fn instantiation_leaves_no_brace() {
        let t = PromptTemplate::cc_agent();
        let text = t.instantiate(&[("IFA_REPORT", "report body")]).unwrap();
        assert!(!text.contains('{'));
        assert!(text.contains("report body"));
    }

    #[test]
    fn missing_placeholder_value_is_an_error() {
        let t = PromptTemplate::sfc_agent();
        assert!(matches!(
            t.instantiate(&[("IFA_REPORT", "x")]),
            Err(AgentError::UnresolvedPlaceholder(_))
        ));
    }

    #[test]
    fn scripted_reasoner_consumes_in_order_per_tag() {
        let mut r = ScriptedReasoner::new(vec![
            ("cc-agent".into(), "first".into()),
            ("ra-agent".into(), "other".into()),
            ("cc-agent".into(), "second".into()),
        ]);
        assert_eq!(r.complete("cc-agent", "", "").unwrap(), "first");
        assert_eq!(r.complete("cc-agent", "", "").unwrap(), "second");
        assert_eq!(r.complete("ra-agent", "", "").unwrap(), "other");
        assert_eq!(
            r.complete("cc-agent", "", ""),
            Err(AgentError::ScriptExhausted("cc-agent".into()))
        );
    }

    #[test]
    fn script_text_round_trips() {
        let entries = vec![
            ("cc-agent".to_string(), "DECISION: a\n".to_string()),
            (
                "ra-agent".to_string(),
                "WEIGHTS: a1=1 a2=1 a3=1 a4=1\nRATIONALE: balance\n".to_string(),
            ),
        ];
        let text = render_script(&entries);
        assert_eq!(parse_script(&text).unwrap(), entries);
    }

    #[test]
    fn script_content_before_tag_rejected() {
        assert!(matches!(
            parse_script("stray\n@cc-agent\nDECISION: a\n"),
            Err(AgentError::MalformedScript(_))
        ));
    }

    #[test]
    fn fusion_averages_loss() {
        let (app, env, qoe, run) = sample_profile();
        let report = fuse_reports(&[qos(0.02), qos(0.04)], app, env, qoe, run).unwrap();
        assert!((report.observed_qos.loss - 0.03).abs() < 1e-12);
    }

    #[test]
    fn fusion_of_single_sample_echoes_it() {
        let (app, env, qoe, run) = sample_profile();
        let sample = qos(0.07);
        let report = fuse_reports(&[sample.clone()], app, env, qoe, run).unwrap();
        assert_eq!(report.observed_qos, sample);
    }

    #[test]
    fn fusion_of_empty_window_fails() {
        let (app, env, qoe, run) = sample_profile();
        assert_eq!(
            fuse_reports(&[], app, env, qoe, run),
            Err(AgentError::NoSamples)
        );
    }

    fn fresh_conn(registry: &SchemeRegistry) -> CcConnection {
        CcConnection::new(registry.get("reno").unwrap())
    }

    #[test]
    fn cc_generate_decision_registers_and_swaps_without_reset() {
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        conn.state.cwnd = 37.0;
        let spec = GeneratedCcSpec {
            name: "llm_cc_v1".into(),
            additive_increase: 1.5,
            beta: 0.7,
            rtt_threshold: 1.3,
            pacing_gain: 1.0,
            rtt_sensitivity: 0.5,
        };
        let response = format!("DECISION: d\n```ccspec\n{}```\nRATIONALE: loss-heavy\n", spec.render());
        let mut r = ScriptedReasoner::new(vec![("cc-agent".into(), response)]);
        let mut log = DecisionLog::default();
        let d = cc_agent_evaluate(&sample_ifa(), &mut r, &mut registry, &mut conn, 60_000_000, &mut log);
        assert_eq!(d.action.letter(), 'd');
        assert!(registry.get("llm_cc_v1").is_ok());
        assert_eq!(conn.scheme_name(), "llm_cc_v1");
        assert_eq!(conn.state.cwnd, 37.0, "swap must not reset the window");
        assert_eq!(conn.swap_markers.len(), 1);
        assert_eq!(log.entries().len(), 1);
    }

    #[test]
    fn cc_keep_decision_changes_nothing() {
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        let before = conn.state.clone();
        let mut r = ScriptedReasoner::new(vec![("cc-agent".into(), "DECISION: a\n".into())]);
        let mut log = DecisionLog::default();
        let d = cc_agent_evaluate(&sample_ifa(), &mut r, &mut registry, &mut conn, 0, &mut log);
        assert_eq!(d.action, CcAction::Keep);
        assert_eq!(conn.state, before);
        assert!(conn.swap_markers.is_empty());
    }

    #[test]
    fn cc_malformed_output_fails_safe_and_logs_raw() {
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        let mut r = ScriptedReasoner::new(vec![(
            "cc-agent".into(),
            "complete gibberish".into(),
        )]);
        let mut log = DecisionLog::default();
        let d = cc_agent_evaluate(&sample_ifa(), &mut r, &mut registry, &mut conn, 0, &mut log);
        assert_eq!(d.action, CcAction::Keep);
        assert_eq!(log.entries()[0].raw, "complete gibberish");
        assert!(log.entries()[0].outcome.contains("fail-safe"));
    }

    #[test]
    fn cc_switch_to_unknown_scheme_fails_safe() {
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        let mut r = ScriptedReasoner::new(vec![(
            "cc-agent".into(),
            "DECISION: c\nSWITCH: nonexistent\n".into(),
        )]);
        let mut log = DecisionLog::default();
        let d = cc_agent_evaluate(&sample_ifa(), &mut r, &mut registry, &mut conn, 0, &mut log);
        assert_eq!(d.action, CcAction::Keep);
        assert_eq!(conn.scheme_name(), "reno");
    }

    #[test]
    fn cc_exhausted_script_fails_safe() {
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        let mut r = ScriptedReasoner::new(vec![]);
        let mut log = DecisionLog::default();
        let d = cc_agent_evaluate(&sample_ifa(), &mut r, &mut registry, &mut conn, 0, &mut log);
        assert_eq!(d.action, CcAction::Keep);
    }

    fn toy_window() -> MetricsWindow {
        MetricsWindow {
            start_minute: 0,
            end_minute: 1439,
            mean_arrival_rate_per_min: 6.0,
            mean_cost_per_min: 10.0,
            mean_revenue_per_min: 20.0,
            mean_green_per_min: 4.0,
            mean_profit_per_min: 6.0,
            mean_utilization: 0.3,
            mean_fairness: 0.9,
            acceptance_ratio: 0.97,
            minutes: Vec::new(),
        }
    }

    #[test]
    fn ra_update_applies_new_weights() {
        let current = ObjectiveWeights::profit_only();
        let mut r = ScriptedReasoner::new(vec![(
            "ra-agent".into(),
            "WEIGHTS: a1=0.1 a2=0.3 a3=0.2 a4=0.4\nRATIONALE: cut emissions\n".into(),
        )]);
        let mut log = DecisionLog::default();
        let w = ra_agent_evaluate(&toy_window(), current, &mut r, 0, &mut log);
        assert_eq!(w.as_array(), [0.1, 0.3, 0.2, 0.4]);
    }

    #[test]
    fn ra_malformed_output_retains_weights() {
        let current = ObjectiveWeights::new(0.2, 0.3, 0.25, 0.25).unwrap();
        let mut r = ScriptedReasoner::new(vec![("ra-agent".into(), "no weights here".into())]);
        let mut log = DecisionLog::default();
        let w = ra_agent_evaluate(&toy_window(), current, &mut r, 0, &mut log);
        assert_eq!(w, current);
        assert!(log.entries()[0].outcome.contains("fail-safe"));
    }

    fn toy_ra_report() -> RaReport {
        RaReport {
            source: "n1".into(),
            destination: "n4".into(),
            paths: vec![crate::allocator::CandidatePath {
                nodes: vec!["n1".into(), "n2".into(), "n3".into(), "n4".into()],
                latency_us: 3_000,
                free_instances: vec![5, 5, 5, 5],
                free_bandwidth_bps: 1e9,
            }],
        }
    }

    #[test]
    fn sfc_plan_for_the_reference_chain_is_accepted() {
        let response = "\
RATIONALE: reliability-sensitive flow over lossy access
```sfcplan
protocol=custom
path=1
nf.1=QoS Enforcer@n2
nf.2=Transport Assistant@n3
nf.3=Packet Forwarder@n4
```
";
        let mut r = ScriptedReasoner::new(vec![("sfc-agent".into(), response.into())]);
        let mut log = DecisionLog::default();
        let plan = sfc_agent_plan(
            &sample_ifa(),
            &default_catalog(),
            &toy_ra_report(),
            &mut r,
            0,
            &mut log,
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.steps[1].nf_name, "Transport Assistant");
        assert_eq!(plan.path_index, 1);
    }

    #[test]
    fn sfc_off_path_plan_rejected() {
        let response = "```sfcplan\nprotocol=custom\npath=1\nnf.1=Packet Forwarder@n9\n```\n";
        let mut r = ScriptedReasoner::new(vec![("sfc-agent".into(), response.into())]);
        let mut log = DecisionLog::default();
        let err = sfc_agent_plan(
            &sample_ifa(),
            &default_catalog(),
            &toy_ra_report(),
            &mut r,
            0,
            &mut log,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::PlanRejected(_)));
    }

    #[test]
    fn sfc_empty_legacy_plan_is_valid_pass_through() {
        let response = "```sfcplan\nprotocol=legacy-udp\npath=1\n```\n";
        let mut r = ScriptedReasoner::new(vec![("sfc-agent".into(), response.into())]);
        let mut log = DecisionLog::default();
        let plan = sfc_agent_plan(
            &sample_ifa(),
            &default_catalog(),
            &toy_ra_report(),
            &mut r,
            0,
            &mut log,
        )
        .unwrap();
        assert!(plan.steps.is_empty());
    }

    #[test]
    fn sfc_parse_failure_rejects_admission() {
        let mut r = ScriptedReasoner::new(vec![("sfc-agent".into(), "no plan".into())]);
        let mut log = DecisionLog::default();
        assert!(matches!(
            sfc_agent_plan(
                &sample_ifa(),
                &default_catalog(),
                &toy_ra_report(),
                &mut r,
                0,
                &mut log,
            ),
            Err(AgentError::PlanRejected(_))
        ));
    }

    #[test]
    fn recorded_transcript_replays_to_identical_decisions() {
        let responses = vec![
            ("cc-agent".to_string(), "DECISION: a\nRATIONALE: fine\n".to_string()),
            (
                "cc-agent".to_string(),
                "DECISION: c\nSWITCH: cubic_lite\nRATIONALE: loss\n".to_string(),
            ),
        ];
        let run = |mut reasoner: Box<dyn FnMut(&str) -> Result<String, AgentError>>| {
            let mut registry = SchemeRegistry::new();
            let mut conn = fresh_conn(&registry);
            let mut log = DecisionLog::default();
            struct F<'a>(&'a mut dyn FnMut(&str) -> Result<String, AgentError>);
            impl Reasoner for F<'_> {
                fn label(&self) -> &str {
                    "fn"
                }
                fn complete(&mut self, tag: &str, _s: &str, _u: &str) -> Result<String, AgentError> {
                    (self.0)(tag)
                }
            }
            let mut f = F(&mut *reasoner);
            let d1 = cc_agent_evaluate(&sample_ifa(), &mut f, &mut registry, &mut conn, 60_000_000, &mut log);
            let d2 = cc_agent_evaluate(&sample_ifa(), &mut f, &mut registry, &mut conn, 120_000_000, &mut log);
            (d1, d2, conn.scheme_name().to_string())
        };
        // "Live" pass through a recorder.
        let mut recorder = RecordingReasoner::new(ScriptedReasoner::new(responses.clone()));
        let mut registry = SchemeRegistry::new();
        let mut conn = fresh_conn(&registry);
        let mut log = DecisionLog::default();
        let live1 = cc_agent_evaluate(&sample_ifa(), &mut recorder, &mut registry, &mut conn, 60_000_000, &mut log);
        let live2 = cc_agent_evaluate(&sample_ifa(), &mut recorder, &mut registry, &mut conn, 120_000_000, &mut log);
        let live_scheme = conn.scheme_name().to_string();
        // Replay from the rendered transcript.
        let script = render_script(&recorder.transcript);
        let mut replay = ScriptedReasoner::new(parse_script(&script).unwrap());
        let mut cursor_based = move |tag: &str| replay.complete(tag, "", "");
        let (r1, r2, replay_scheme) = run(Box::new(&mut cursor_based));
        assert_eq!(live1, r1);
        assert_eq!(live2, r2);
        assert_eq!(live_scheme, replay_scheme);
    }
}
