//! Pluggable congestion control.
//!
//! Mirrors the three-hook shape of a kernel CC module: `ssthresh`
//! governs the window cut on loss, `cong_avoid` the growth in
//! congestion avoidance, `undo_cwnd` the rollback after a spurious
//! loss. Loss *detection* lives in the simulator's TCP-like baseline;
//! this module is pure window arithmetic driven by ack/loss events.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound on the congestion window, in packets.
pub const MIN_CWND: f64 = 1.0;
/// Lower bound on the slow-start threshold, in packets.
pub const MIN_SSTHRESH: f64 = 2.0;

const SRTT_GAIN: f64 = 1.0 / 8.0;
const CUBIC_C: f64 = 0.4;
const CUBIC_BETA: f64 = 0.7;
const VEGAS_ALPHA: f64 = 2.0;
const VEGAS_BETA: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum CcError {
    #[error("scheme `{0}` is already registered")]
    DuplicateName(String),
    #[error("scheme `{0}` is not registered")]
    UnknownScheme(String),
    #[error("connection is not in loss recovery")]
    NotInRecovery,
    #[error("generated spec out of bounds: {0}")]
    SpecOutOfBounds(String),
}

/// Per-connection window state shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcState {
    /// Congestion window in packets.
    pub cwnd: f64,
    /// Slow-start threshold in packets.
    pub ssthresh: f64,
    pub srtt_us: u64,
    pub min_rtt_us: u64,
    pub in_recovery: bool,
    /// Window at the moment the current recovery started.
    pub prior_cwnd: f64,
    /// Fractional ack accumulator; one window's worth of acks = one
    /// congestion-avoidance growth step.
    pub acked_since_rtt: f64,
    pub delivered_rate_estimate: f64,
    /// Cubic epoch anchor; cleared on every loss event.
    pub epoch_start_us: Option<u64>,
    /// Window just before the last loss (cubic's W_max).
    pub w_max: f64,
}

impl Default for CcState {
    fn default() -> Self {
        CcState {
            cwnd: 10.0,
            ssthresh: 1.0e9,
            srtt_us: 0,
            min_rtt_us: u64::MAX,
            in_recovery: false,
            prior_cwnd: 10.0,
            acked_since_rtt: 0.0,
            delivered_rate_estimate: 0.0,
            epoch_start_us: None,
            w_max: 0.0,
        }
    }
}

impl CcState {
    /// srtt / min_rtt, or 1.0 before any sample.
    pub fn rtt_inflation(&self) -> f64 {
        if self.min_rtt_us == u64::MAX || self.min_rtt_us == 0 || self.srtt_us == 0 {
            1.0
        } else {
            self.srtt_us as f64 / self.min_rtt_us as f64
        }
    }
}

/// The three window-management hooks of a pluggable scheme.
///
/// Hooks are pure functions of the passed state; schemes keep no
/// internal mutable data, so a single instance can serve any number
/// of connections.
pub trait CcScheme: Send + Sync {
    fn name(&self) -> &str;
    /// New slow-start threshold on a loss signal, unfloored.
    fn ssthresh(&self, state: &CcState) -> f64;
    /// Window growth during congestion avoidance.
    fn cong_avoid(&self, state: &mut CcState, acked_pkts: u64, now_us: u64);
    /// Window to restore when a loss turns out to be spurious.
    fn undo_cwnd(&self, state: &CcState) -> f64;
    /// Pacing multiplier applied on top of cwnd/srtt pacing.
    fn pacing_gain(&self) -> f64 {
        1.0
    }
}

pub type SchemeRef = Arc<dyn CcScheme>;

/// Named scheme registry. Built-ins are pre-registered.
pub struct SchemeRegistry {
    schemes: BTreeMap<String, SchemeRef>,
}

impl fmt::Debug for SchemeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeRegistry")
            .field("schemes", &self.names())
            .finish()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl SchemeRegistry {
    /// Registry pre-loaded with `reno`, `cubic_lite`, `vegas_lite`.
    pub fn new() -> Self {
        let mut r = SchemeRegistry {
            schemes: BTreeMap::new(),
        };
        r.register(Arc::new(Reno)).expect("built-in");
        r.register(Arc::new(CubicLite)).expect("built-in");
        r.register(Arc::new(VegasLite)).expect("built-in");
        r
    }

    pub fn register(&mut self, scheme: SchemeRef) -> Result<(), CcError> {
        let name = scheme.name().to_string();
        if self.schemes.contains_key(&name) {
            return Err(CcError::DuplicateName(name));
        }
        self.schemes.insert(name, scheme);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<SchemeRef, CcError> {
        self.schemes
            .get(name)
            .cloned()
            .ok_or_else(|| CcError::UnknownScheme(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.schemes.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.schemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemes.is_empty()
    }
}

/// Marker left in the trace when a connection hot-swaps its scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapMarker {
    pub at_us: u64,
    pub from: String,
    pub to: String,
}

/// A live connection: window state plus the scheme currently driving it.
pub struct CcConnection {
    pub state: CcState,
    scheme: SchemeRef,
    pub swap_markers: Vec<SwapMarker>,
}

impl CcConnection {
    pub fn new(scheme: SchemeRef) -> Self {
        CcConnection {
            state: CcState::default(),
            scheme,
            swap_markers: Vec::new(),
        }
    }

    pub fn scheme_name(&self) -> &str {
        self.scheme.name()
    }

    pub fn pacing_gain(&self) -> f64 {
        self.scheme.pacing_gain()
    }

    /// Ack processing: RTT bookkeeping, then slow start or the
    /// scheme's congestion-avoidance hook.
    pub fn on_ack(&mut self, acked_pkts: u64, rtt_sample_us: u64, now_us: u64) {
        if rtt_sample_us > 0 {
            if self.state.srtt_us == 0 {
                self.state.srtt_us = rtt_sample_us;
            } else {
                let srtt = self.state.srtt_us as f64;
                self.state.srtt_us =
                    (srtt + SRTT_GAIN * (rtt_sample_us as f64 - srtt)).round() as u64;
            }
            self.state.min_rtt_us = self.state.min_rtt_us.min(rtt_sample_us);
        }
        if self.state.cwnd < self.state.ssthresh {
            self.state.cwnd += acked_pkts as f64;
        } else {
            self.scheme.cong_avoid(&mut self.state, acked_pkts, now_us);
        }
        self.state.cwnd = self.state.cwnd.max(MIN_CWND);
        self.state.ssthresh = self.state.ssthresh.max(MIN_SSTHRESH);
    }

    /// Loss signal (triple-dup-ack or RTO): save the prior window, cut
    /// cwnd/ssthresh via the scheme's `ssthresh` hook, enter recovery.
    pub fn on_loss(&mut self, _now_us: u64) {
        self.state.prior_cwnd = self.state.cwnd;
        self.state.w_max = self.state.cwnd;
        self.state.epoch_start_us = None;
        let raw = self.scheme.ssthresh(&self.state);
        self.state.ssthresh = raw.max(MIN_SSTHRESH);
        self.state.cwnd = raw.max(MIN_CWND).min(self.state.cwnd);
        self.state.acked_since_rtt = 0.0;
        self.state.in_recovery = true;
    }

    /// Roll back a spurious loss: restore the scheme's undo window.
    pub fn undo(&mut self) -> Result<(), CcError> {
        if !self.state.in_recovery {
            return Err(CcError::NotInRecovery);
        }
        self.state.cwnd = self.scheme.undo_cwnd(&self.state).max(MIN_CWND);
        self.state.in_recovery = false;
        Ok(())
    }

    pub fn exit_recovery(&mut self) {
        self.state.in_recovery = false;
    }

    /// Hot-swap the scheme between events. Window state, RTT state and
    /// anything in flight are untouched; only the hook pointer changes.
    pub fn swap_scheme(
        &mut self,
        registry: &SchemeRegistry,
        new_scheme: &str,
        now_us: u64,
    ) -> Result<(), CcError> {
        let scheme = registry.get(new_scheme)?;
        self.swap_markers.push(SwapMarker {
            at_us: now_us,
            from: self.scheme.name().to_string(),
            to: new_scheme.to_string(),
        });
        self.scheme = scheme;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Built-in schemes
// ---------------------------------------------------------------------------

/// Classic AIMD: +1 packet per RTT, halve on loss.
pub struct Reno;

impl CcScheme for Reno {
    fn name(&self) -> &str {
        "reno"
    }

    fn ssthresh(&self, state: &CcState) -> f64 {
        state.cwnd / 2.0
    }

    fn cong_avoid(&self, state: &mut CcState, acked_pkts: u64, _now_us: u64) {
        state.acked_since_rtt += acked_pkts as f64;
        while state.acked_since_rtt >= state.cwnd {
            state.acked_since_rtt -= state.cwnd;
            state.cwnd += 1.0;
        }
    }

    fn undo_cwnd(&self, state: &CcState) -> f64 {
        state.prior_cwnd
    }
}

/// Cubic window function with C = 0.4 and beta = 0.7; no TCP-friendly
/// region or HyStart.
pub struct CubicLite;

impl CcScheme for CubicLite {
    fn name(&self) -> &str {
        "cubic_lite"
    }

    fn ssthresh(&self, state: &CcState) -> f64 {
        state.cwnd * CUBIC_BETA
    }

    fn cong_avoid(&self, state: &mut CcState, acked_pkts: u64, now_us: u64) {
        let epoch = *state.epoch_start_us.get_or_insert(now_us);
        let t = (now_us.saturating_sub(epoch)) as f64 / 1e6;
        let w_max = if state.w_max > 0.0 {
            state.w_max
        } else {
            state.cwnd
        };
        let k = (w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt();
        let target = CUBIC_C * (t - k).powi(3) + w_max;
        if target > state.cwnd {
            // Close the gap over roughly one window of acks.
            state.cwnd += (target - state.cwnd) * acked_pkts as f64 / state.cwnd;
        } else {
            state.cwnd += 0.01 * acked_pkts as f64 / state.cwnd;
        }
    }

    fn undo_cwnd(&self, state: &CcState) -> f64 {
        state.prior_cwnd
    }
}

/// Delay-based increments: estimate packets queued from RTT inflation
/// and hold the window inside [alpha, beta] extra packets.
pub struct VegasLite;

impl CcScheme for VegasLite {
    fn name(&self) -> &str {
        "vegas_lite"
    }

    fn ssthresh(&self, state: &CcState) -> f64 {
        state.cwnd / 2.0
    }

    fn cong_avoid(&self, state: &mut CcState, acked_pkts: u64, _now_us: u64) {
        state.acked_since_rtt += acked_pkts as f64;
        while state.acked_since_rtt >= state.cwnd {
            state.acked_since_rtt -= state.cwnd;
            let inflation = state.rtt_inflation();
            let queued = state.cwnd * (1.0 - 1.0 / inflation);
            if queued < VEGAS_ALPHA {
                state.cwnd += 1.0;
            } else if queued > VEGAS_BETA {
                state.cwnd -= 1.0;
            }
        }
    }

    fn undo_cwnd(&self, state: &CcState) -> f64 {
        state.prior_cwnd
    }
}

// ---------------------------------------------------------------------------
// Generated schemes
// ---------------------------------------------------------------------------

/// Bounded parametric family standing in for agent-generated CC code:
/// AIMD with a delay-sensitive growth term and a tunable decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCcSpec {
    /// Scheme name, conventionally `llm_cc_v<i>`.
    pub name: String,
    /// Packets added per RTT when the path shows no RTT inflation.
    pub additive_increase: f64,
    /// Multiplicative decrease applied on loss, in (0, 1).
    pub beta: f64,
    /// srtt/min_rtt ratio above which growth is penalized.
    pub rtt_threshold: f64,
    /// Pacing multiplier, >= 1.
    pub pacing_gain: f64,
    /// Blend of loss-based and delay-based behavior, in [0, 1].
    pub rtt_sensitivity: f64,
}

impl GeneratedCcSpec {
    pub fn validate(&self) -> Result<(), CcError> {
        if self.name.is_empty() {
            return Err(CcError::SpecOutOfBounds("name must be non-empty".into()));
        }
        if !(self.additive_increase > 0.0) {
            return Err(CcError::SpecOutOfBounds(format!(
                "additive_increase={} must be > 0",
                self.additive_increase
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(CcError::SpecOutOfBounds(format!(
                "beta={} must lie in (0,1)",
                self.beta
            )));
        }
        if !(self.rtt_threshold >= 1.0) {
            return Err(CcError::SpecOutOfBounds(format!(
                "rtt_threshold={} must be >= 1",
                self.rtt_threshold
            )));
        }
        if !(self.pacing_gain >= 1.0) {
            return Err(CcError::SpecOutOfBounds(format!(
                "pacing_gain={} must be >= 1",
                self.pacing_gain
            )));
        }
        if !(0.0..=1.0).contains(&self.rtt_sensitivity) {
            return Err(CcError::SpecOutOfBounds(format!(
                "rtt_sensitivity={} must lie in [0,1]",
                self.rtt_sensitivity
            )));
        }
        Ok(())
    }

    /// Parse the `ccspec` fenced-block body: one `key=value` per line.
    pub fn parse(body: &str) -> Result<Self, CcError> {
        let mut name = None;
        let mut additive_increase = None;
        let mut beta = None;
        let mut rtt_threshold = None;
        let mut pacing_gain = None;
        let mut rtt_sensitivity = None;
        for line in body.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CcError::SpecOutOfBounds(format!("malformed line `{line}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = |field: &str| -> Result<f64, CcError> {
                value.parse::<f64>().map_err(|_| {
                    CcError::SpecOutOfBounds(format!("{field}=`{value}` is not a number"))
                })
            };
            match key {
                "name" => name = Some(value.to_string()),
                "additive_increase" => additive_increase = Some(num("additive_increase")?),
                "beta" => beta = Some(num("beta")?),
                "rtt_threshold" => rtt_threshold = Some(num("rtt_threshold")?),
                "pacing_gain" => pacing_gain = Some(num("pacing_gain")?),
                "rtt_sensitivity" => rtt_sensitivity = Some(num("rtt_sensitivity")?),
                other => {
                    return Err(CcError::SpecOutOfBounds(format!("unknown key `{other}`")))
                }
            }
        }
        let missing =
            |field: &str| CcError::SpecOutOfBounds(format!("missing field `{field}`"));
        let spec = GeneratedCcSpec {
            name: name.ok_or_else(|| missing("name"))?,
            additive_increase: additive_increase.ok_or_else(|| missing("additive_increase"))?,
            beta: beta.ok_or_else(|| missing("beta"))?,
            rtt_threshold: rtt_threshold.ok_or_else(|| missing("rtt_threshold"))?,
            pacing_gain: pacing_gain.ok_or_else(|| missing("pacing_gain"))?,
            rtt_sensitivity: rtt_sensitivity.ok_or_else(|| missing("rtt_sensitivity"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Render the `ccspec` fenced-block body (inverse of [`parse`]).
    ///
    /// [`parse`]: GeneratedCcSpec::parse
    pub fn render(&self) -> String {
        format!(
            "name={}\nadditive_increase={}\nbeta={}\nrtt_threshold={}\npacing_gain={}\nrtt_sensitivity={}\n",
            self.name,
            self.additive_increase,
            self.beta,
            self.rtt_threshold,
            self.pacing_gain,
            self.rtt_sensitivity
        )
    }
}

/// Interpreter for a [`GeneratedCcSpec`].
///
/// Per-RTT growth is `additive_increase - rtt_sensitivity * max(0,
/// srtt/min_rtt - rtt_threshold)`; the penalty can push growth
/// negative, shrinking the window under heavy queuing. Loss applies
/// the generated beta.
pub struct GeneratedScheme {
    spec: GeneratedCcSpec,
}

impl GeneratedScheme {
    pub fn spec(&self) -> &GeneratedCcSpec {
        &self.spec
    }

    /// Per-RTT window delta at the given RTT inflation ratio.
    pub fn growth_per_rtt(&self, inflation: f64) -> f64 {
        self.spec.additive_increase
            - self.spec.rtt_sensitivity * (inflation - self.spec.rtt_threshold).max(0.0)
    }
}

impl CcScheme for GeneratedScheme {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn ssthresh(&self, state: &CcState) -> f64 {
        state.cwnd * self.spec.beta
    }

    fn cong_avoid(&self, state: &mut CcState, acked_pkts: u64, _now_us: u64) {
        state.acked_since_rtt += acked_pkts as f64;
        while state.acked_since_rtt >= state.cwnd {
            state.acked_since_rtt -= state.cwnd;
            state.cwnd = (state.cwnd + self.growth_per_rtt(state.rtt_inflation())).max(MIN_CWND);
        }
    }

    fn undo_cwnd(&self, state: &CcState) -> f64 {
        state.prior_cwnd
    }

    fn pacing_gain(&self) -> f64 {
        self.spec.pacing_gain
    }
}

/// Validate a spec and wrap it as a scheme ready for registration.
pub fn build_generated_scheme(spec: GeneratedCcSpec) -> Result<SchemeRef, CcError> {
    spec.validate()?;
    Ok(Arc::new(GeneratedScheme { spec }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conn(registry: &SchemeRegistry, name: &str) -> CcConnection {
        CcConnection::new(registry.get(name).unwrap())
    }

    #[test]
    fn registry_has_three_builtins() {
        let r = SchemeRegistry::new();
        assert_eq!(r.names(), vec!["cubic_lite", "reno", "vegas_lite"]);
    }

    #[test]
    fn register_generated_scheme_grows_registry() {
        let mut r = SchemeRegistry::new();
        let spec = GeneratedCcSpec {
            name: "llm_cc_v1".into(),
            additive_increase: 2.0,
            beta: 0.8,
            rtt_threshold: 1.2,
            pacing_gain: 1.1,
            rtt_sensitivity: 0.5,
        };
        r.register(build_generated_scheme(spec).unwrap()).unwrap();
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn reregister_reno_is_duplicate() {
        let mut r = SchemeRegistry::new();
        assert_eq!(
            r.register(Arc::new(Reno)),
            Err(CcError::DuplicateName("reno".into()))
        );
    }

    #[test]
    fn reno_adds_one_packet_per_rtt() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 10.0;
        c.state.ssthresh = 5.0; // congestion avoidance
        for _ in 0..10 {
            c.on_ack(1, 10_000, 0);
        }
        assert_eq!(c.state.cwnd, 11.0);
    }

    #[test]
    fn slow_start_doubles_per_rtt() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 2.0;
        c.state.ssthresh = 100.0;
        c.on_ack(2, 10_000, 0);
        assert_eq!(c.state.cwnd, 4.0);
    }

    #[test]
    fn vegas_non_decreasing_at_min_rtt() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "vegas_lite");
        c.state.cwnd = 8.0;
        c.state.ssthresh = 4.0;
        c.state.srtt_us = 10_000;
        c.state.min_rtt_us = 10_000;
        let before = c.state.cwnd;
        for _ in 0..20 {
            c.on_ack(1, 10_000, 0);
        }
        assert!(c.state.cwnd >= before);
    }

    #[test]
    fn reno_loss_halves_window() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 20.0;
        c.on_loss(0);
        assert_eq!(c.state.ssthresh, 10.0);
        assert_eq!(c.state.cwnd, 10.0);
        assert!(c.state.in_recovery);
    }

    #[test]
    fn generated_beta_applied_on_loss() {
        let r = SchemeRegistry::new();
        let spec = GeneratedCcSpec {
            name: "llm_cc_v1".into(),
            additive_increase: 1.0,
            beta: 0.7,
            rtt_threshold: 1.2,
            pacing_gain: 1.0,
            rtt_sensitivity: 0.0,
        };
        let mut reg = r;
        reg.register(build_generated_scheme(spec).unwrap()).unwrap();
        let mut c = conn(&reg, "llm_cc_v1");
        c.state.cwnd = 20.0;
        c.on_loss(0);
        assert!((c.state.cwnd - 14.0).abs() < 1e-9);
    }

    #[test]
    fn loss_at_floor_keeps_cwnd_one() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 1.0;
        c.on_loss(0);
        assert_eq!(c.state.cwnd, 1.0);
        assert_eq!(c.state.ssthresh, 2.0);
    }

    #[test]
    fn undo_restores_prior_window() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 20.0;
        c.on_loss(0);
        c.undo().unwrap();
        assert_eq!(c.state.cwnd, 20.0);
        assert!(!c.state.in_recovery);
        assert_eq!(c.undo(), Err(CcError::NotInRecovery));
    }

    #[test]
    fn undo_after_genuine_loss_then_ack_is_consistent() {
        let r = SchemeRegistry::new();
        let mut c = conn(&r, "reno");
        c.state.cwnd = 20.0;
        c.state.ssthresh = 5.0;
        c.on_loss(0);
        let ssthresh_after_loss = c.state.ssthresh;
        c.undo().unwrap();
        c.on_ack(1, 10_000, 0);
        assert!(c.state.cwnd >= 20.0);
        assert_eq!(c.state.ssthresh, ssthresh_after_loss);
    }

    #[test]
    fn swap_preserves_state_and_records_marker() {
        let mut reg = SchemeRegistry::new();
        let spec = GeneratedCcSpec {
            name: "llm_cc_v1".into(),
            additive_increase: 2.0,
            beta: 0.8,
            rtt_threshold: 1.3,
            pacing_gain: 1.0,
            rtt_sensitivity: 0.3,
        };
        reg.register(build_generated_scheme(spec).unwrap()).unwrap();
        let mut c = conn(&reg, "reno");
        c.state.cwnd = 17.0;
        c.state.ssthresh = 9.0;
        c.state.srtt_us = 12_345;
        c.swap_scheme(&reg, "llm_cc_v1", 1_000_000).unwrap();
        assert_eq!(c.scheme_name(), "llm_cc_v1");
        assert_eq!(c.state.cwnd, 17.0);
        assert_eq!(c.state.ssthresh, 9.0);
        assert_eq!(c.state.srtt_us, 12_345);
        assert_eq!(c.swap_markers.len(), 1);
        assert_eq!(c.swap_markers[0].at_us, 1_000_000);
    }

    #[test]
    fn swap_to_unknown_scheme_leaves_connection_untouched() {
        let reg = SchemeRegistry::new();
        let mut c = conn(&reg, "reno");
        let err = c.swap_scheme(&reg, "nope", 0).unwrap_err();
        assert_eq!(err, CcError::UnknownScheme("nope".into()));
        assert_eq!(c.scheme_name(), "reno");
        assert!(c.swap_markers.is_empty());
    }

    #[test]
    fn swap_to_same_scheme_is_marker_only() {
        let reg = SchemeRegistry::new();
        let mut c = conn(&reg, "reno");
        let before = c.state.clone();
        c.swap_scheme(&reg, "reno", 5).unwrap();
        assert_eq!(c.state, before);
        assert_eq!(c.swap_markers.len(), 1);
    }

    #[test]
    fn generated_growth_suppressed_under_rtt_inflation() {
        // sensitivity 1, srtt = 2*min_rtt, threshold 1.2 => penalty 0.8
        let spec = GeneratedCcSpec {
            name: "llm_cc_vx".into(),
            additive_increase: 0.5,
            beta: 0.5,
            rtt_threshold: 1.2,
            pacing_gain: 1.0,
            rtt_sensitivity: 1.0,
        };
        let scheme = GeneratedScheme { spec };
        assert!(scheme.growth_per_rtt(2.0) <= 0.0);
    }

    #[test]
    fn generated_matches_reno_on_loss() {
        let mut reg = SchemeRegistry::new();
        let spec = GeneratedCcSpec {
            name: "reno_like".into(),
            additive_increase: 1.0,
            beta: 0.5,
            rtt_threshold: 10.0,
            pacing_gain: 1.0,
            rtt_sensitivity: 0.0,
        };
        reg.register(build_generated_scheme(spec).unwrap()).unwrap();
        let mut a = conn(&reg, "reno");
        let mut b = conn(&reg, "reno_like");
        for c in [&mut a, &mut b] {
            c.state.cwnd = 24.0;
            c.state.ssthresh = 12.0;
        }
        // identical event trace: acks then a loss then more acks
        for _ in 0..48 {
            a.on_ack(1, 10_000, 0);
            b.on_ack(1, 10_000, 0);
        }
        a.on_loss(0);
        b.on_loss(0);
        for _ in 0..30 {
            a.on_ack(1, 10_000, 0);
            b.on_ack(1, 10_000, 0);
        }
        assert_eq!(a.state.cwnd, b.state.cwnd);
        assert_eq!(a.state.ssthresh, b.state.ssthresh);
    }

    #[test]
    fn spec_bounds_rejected() {
        let mut spec = GeneratedCcSpec {
            name: "llm_cc_v1".into(),
            additive_increase: 1.0,
            beta: 1.5,
            rtt_threshold: 1.2,
            pacing_gain: 1.0,
            rtt_sensitivity: 0.5,
        };
        assert!(matches!(
            spec.validate(),
            Err(CcError::SpecOutOfBounds(_))
        ));
        spec.beta = 0.5;
        spec.rtt_sensitivity = 2.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn ccspec_parse_render_round_trip() {
        let spec = GeneratedCcSpec {
            name: "llm_cc_v2".into(),
            additive_increase: 3.5,
            beta: 0.85,
            rtt_threshold: 1.25,
            pacing_gain: 1.2,
            rtt_sensitivity: 0.6,
        };
        let parsed = GeneratedCcSpec::parse(&spec.render()).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn cwnd_and_ssthresh_floors_hold_under_random_events() {
        use rand::{Rng, SeedableRng};
        let mut reg = SchemeRegistry::new();
        reg.register(
            build_generated_scheme(GeneratedCcSpec {
                name: "llm_cc_v1".into(),
                additive_increase: 0.3,
                beta: 0.3,
                rtt_threshold: 1.0,
                pacing_gain: 1.0,
                rtt_sensitivity: 1.0,
            })
            .unwrap(),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for name in ["reno", "cubic_lite", "vegas_lite", "llm_cc_v1"] {
            let mut c = conn(&reg, name);
            for i in 0..2000u64 {
                match rng.gen_range(0..10) {
                    0 => c.on_loss(i * 1000),
                    1 => {
                        let _ = c.undo();
                    }
                    _ => c.on_ack(
                        rng.gen_range(1..4),
                        rng.gen_range(5_000..200_000),
                        i * 1000,
                    ),
                }
                assert!(c.state.cwnd >= MIN_CWND, "{name} cwnd floor");
                assert!(c.state.ssthresh >= MIN_SSTHRESH, "{name} ssthresh floor");
            }
        }
    }
}
