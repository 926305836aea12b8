//! Scenario configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, ReasonerSpec};

/// Top-level scenario file: a `kind` selector, an optional reasoner
/// section, and the section matching the kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: String,
    pub reasoner: Option<ReasonerConfig>,
    pub sfc: Option<SfcConfig>,
    pub cc: Option<CcConfig>,
    pub ra: Option<RaConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasonerConfig {
    /// `scripted` or `http`.
    pub mode: String,
    /// Script path, relative to the config file.
    pub script: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
        let cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        match cfg.kind.as_str() {
            "sfc" | "cc" | "ra" => {}
            other => return Err(CliError::Config(format!("unknown kind `{other}`"))),
        }
        let section_present = match cfg.kind.as_str() {
            "sfc" => cfg.sfc.is_some(),
            "cc" => cfg.cc.is_some(),
            _ => cfg.ra.is_some(),
        };
        if !section_present {
            return Err(CliError::Config(format!(
                "kind `{}` requires a matching [{}] section",
                cfg.kind, cfg.kind
            )));
        }
        Ok(cfg)
    }

    /// Resolve the configured reasoner, with script paths taken
    /// relative to the config file's directory.
    pub fn reasoner_spec(&self, config_path: &Path) -> Result<Option<ReasonerSpec>, CliError> {
        let Some(r) = &self.reasoner else {
            return Ok(None);
        };
        match r.mode.as_str() {
            "http" => Ok(Some(ReasonerSpec::Http)),
            "scripted" => {
                let script = r.script.clone().ok_or_else(|| {
                    CliError::Config("scripted reasoner requires `script`".into())
                })?;
                let base = config_path.parent().unwrap_or(Path::new("."));
                Ok(Some(ReasonerSpec::Scripted(base.join(script))))
            }
            other => Err(CliError::Config(format!("unknown reasoner mode `{other}`"))),
        }
    }
}

/// Three-way transport comparison over a linear path with a lossy
/// access link.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfcConfig {
    pub messages: u32,
    pub payload_len: usize,
    /// Nominal application rate; also the constant-rate baseline's
    /// emission rate.
    pub rate_bps: f64,
    /// Sender pacing for the selective-reliability flow; a little
    /// headroom over `rate_bps` absorbs retransmission overhead.
    pub pacing_rate_bps: f64,
    pub reliable_fraction: f64,
    pub ack_every: u32,
    pub switches: usize,
    pub link_rate_bps: f64,
    pub link_delay_us: u64,
    /// Loss probability on the first (access) link.
    pub access_loss: f64,
    pub queue_cap: usize,
    /// Simulated horizon for the custom and constant-rate runs.
    pub run_seconds: u64,
    /// Simulated horizon for the fully-reliable baseline, which crawls
    /// through heavy loss.
    pub tcp_run_seconds: u64,
}

impl Default for SfcConfig {
    fn default() -> Self {
        SfcConfig {
            messages: 10_000,
            payload_len: 1400,
            rate_bps: 1e6,
            pacing_rate_bps: 1.08e6,
            reliable_fraction: 0.5,
            ack_every: 1,
            switches: 3,
            link_rate_bps: 10e6,
            link_delay_us: 10_000,
            access_loss: 0.20,
            queue_cap: 64,
            run_seconds: 200,
            tcp_run_seconds: 1_500,
        }
    }
}

/// 200 s window-governed flow through a bottleneck, with an agent
/// evaluating the connection at a fixed interval.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcConfig {
    pub duration_s: u64,
    pub eval_interval_s: u64,
    pub bottleneck_rate_bps: f64,
    pub side_rate_bps: f64,
    pub link_delay_us: u64,
    pub queue_cap: usize,
    pub payload_len: usize,
    pub initial_scheme: String,
    pub bg_rate_bps: f64,
    pub bg_period_us: u64,
    pub bg_duty: f64,
}

impl Default for CcConfig {
    fn default() -> Self {
        CcConfig {
            duration_s: 200,
            eval_interval_s: 60,
            bottleneck_rate_bps: 12.5e6,
            side_rate_bps: 100e6,
            link_delay_us: 3_000,
            queue_cap: 64,
            payload_len: 1400,
            initial_scheme: "reno".into(),
            bg_rate_bps: 1e6,
            bg_period_us: 100_000,
            bg_duty: 0.5,
        }
    }
}

/// Multi-day embedding simulation with 24 h accounting windows and a
/// weight evaluation after each closed window (except the last).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaConfig {
    /// Simulated horizon; must be a multiple of 24.
    pub hours: u64,
    pub base_rate_per_min: f64,
    /// Hour at which the arrival rate doubles, if any.
    pub double_at_hours: Option<u64>,
    pub lifetime_mean_s: f64,
    pub nf_min: u32,
    pub nf_max: u32,
    pub k_paths: usize,
    /// Keep the initial weights for the whole run and skip the
    /// reasoner (the static control).
    pub static_control: bool,
    /// Initial alpha_1..alpha_4 (renormalized to sum 1).
    pub initial_weights: [f64; 4],
}

impl Default for RaConfig {
    fn default() -> Self {
        RaConfig {
            hours: 144,
            base_rate_per_min: 6.0,
            double_at_hours: Some(72),
            lifetime_mean_s: 600.0,
            nf_min: 1,
            nf_max: 20,
            k_paths: 4,
            static_control: false,
            initial_weights: [0.0, 0.7, 0.0, 0.3],
        }
    }
}
