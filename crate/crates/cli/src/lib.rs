//! Scenario runner built on the `chainsim` library.
//!
//! Three experiments are supported, each reproducible byte-for-byte
//! from (config, seed, script): a three-way transport comparison over a
//! lossy access link ([`sfc_exp`]), a 200 s congestion-control
//! adaptation run with an agent in the loop ([`cc_exp`]), and a
//! multi-day resource-allocation simulation with periodic weight
//! updates ([`ra_exp`]).

pub mod cc_exp;
pub mod config;
pub mod output;
pub mod profile;
pub mod ra_exp;
pub mod sfc_exp;

use std::path::{Path, PathBuf};

use chainsim::agents::{parse_script, HttpReasoner, Reasoner, ScriptedReasoner};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io failure on `{path}`: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] chainsim::netsim::SimError),
    #[error(transparent)]
    Agent(#[from] chainsim::agents::AgentError),
    #[error(transparent)]
    Alloc(#[from] chainsim::allocator::AllocError),
    #[error(transparent)]
    Nf(#[from] chainsim::nfs::NfError),
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Where agent decisions come from: an on-disk script or a live HTTP
/// endpoint configured through the environment.
#[derive(Debug, Clone, PartialEq)]
pub enum ReasonerSpec {
    Scripted(PathBuf),
    Http,
}

impl ReasonerSpec {
    /// Parse the CLI syntax `scripted:<path>` or `http`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text == "http" {
            return Ok(ReasonerSpec::Http);
        }
        if let Some(path) = text.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err(CliError::Config("empty script path".into()));
            }
            return Ok(ReasonerSpec::Scripted(PathBuf::from(path)));
        }
        Err(CliError::Config(format!(
            "unknown reasoner `{text}` (expected `scripted:<path>` or `http`)"
        )))
    }
}

pub fn build_reasoner(spec: &ReasonerSpec) -> Result<Box<dyn Reasoner>, CliError> {
    match spec {
        ReasonerSpec::Scripted(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            Ok(Box::new(ScriptedReasoner::new(parse_script(&text)?)))
        }
        ReasonerSpec::Http => Ok(Box::new(HttpReasoner::from_env()?)),
    }
}
