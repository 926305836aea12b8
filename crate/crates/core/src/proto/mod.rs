//! LLM-Proto: a selective-reliability transport carried in UDP payloads.
//!
//! A datagram is recognized by a magic field at the start of the
//! payload; anything else is treated as legacy UDP traffic. Messages
//! flagged reliable are buffered and retransmitted until acked —
//! each ack names the datagram that triggered it, carries the
//! receiver's cumulative point, and lists out-of-order holdings so
//! lost acks on the return path don't force spurious retransmits.
//! Best-effort messages are sent exactly once.

mod endpoint;
mod header;

pub use endpoint::{
    flow_stats, Delivery, FlowStats, ReceiverOutput, ReceiverState, SenderConfig, SenderState,
};
pub use header::{
    decode_header, encode_datagram, encode_header, CustomHeader, Decoded, FLAG_ACK, FLAG_FIN,
    FLAG_RELIABLE, HEADER_LEN, MAGIC, RESERVED_MASK, VERSION,
};

use thiserror::Error;

/// Largest application payload per message, in bytes.
pub const MAX_PAYLOAD: usize = 1400;

#[derive(Debug, Error, PartialEq)]
pub enum ProtoError {
    #[error("reserved flag bits set in {0}")]
    ReservedBitsSet(String),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte ceiling")]
    PayloadTooLarge(usize),
    #[error("stream is closed for submission")]
    StreamClosed,
    #[error("reliable seq {0} exceeded the retry limit")]
    RetryLimitExceeded(u32),
    #[error("stream has not finished")]
    StreamIncomplete,
}
