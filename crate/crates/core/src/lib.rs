//! Deterministic testbed for agent-managed service function chains.
//!
//! The crate bundles the pieces needed to run the three decision loops
//! fully offline: a selective-reliability transport ([`proto`]), a seeded
//! discrete-event simulator with TCP-like and UDP-like baselines
//! ([`netsim`]), an in-path network-function framework ([`nfs`]), a
//! pluggable congestion-control subsystem ([`cc`]), a multi-objective
//! SFC embedder ([`allocator`]), the report/decision document layer
//! ([`reports`]), and the agent loops themselves ([`agents`]).

pub mod agents;
pub mod allocator;
pub mod cc;
pub mod netsim;
pub mod nfs;
pub mod proto;
pub mod reports;
