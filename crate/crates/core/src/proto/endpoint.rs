//! Sender and receiver state machines.
//!
//! Each endpoint is driven by explicit calls: `submit` queues
//! application messages, `on_tick` emits paced datagrams and
//! retransmissions, `on_ack`/`on_datagram` consume network input.
//! One application message maps to one datagram.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::header::{
    encode_datagram, CustomHeader, Decoded, FLAG_ACK, FLAG_FIN, FLAG_RELIABLE,
};
use super::{decode_header, ProtoError, HEADER_LEN, MAX_PAYLOAD};

#[derive(Debug, Clone)]
pub struct SenderConfig {
    pub pacing_rate_bps: u64,
    pub rto_floor_us: u64,
    pub rto_cap_us: u64,
    pub retry_limit: u32,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            pacing_rate_bps: 1_000_000,
            rto_floor_us: 200_000,
            rto_cap_us: 3_000_000,
            retry_limit: 10,
        }
    }
}

#[derive(Debug, Clone)]
struct Queued {
    seq: u32,
    flags: u8,
    payload: Vec<u8>,
}

#[derive(Debug, Clone)]
struct Unacked {
    flags: u8,
    payload: Vec<u8>,
    retries: u32,
    rto_us: u64,
    next_retx_us: u64,
    /// Acks that released a higher seq while this one stayed
    /// outstanding; three of them signal loss without waiting for the
    /// timer (the network and the reliable class are FIFO).
    overtaken: u32,
}

#[derive(Debug)]
pub struct SenderState {
    stream_id: u16,
    config: SenderConfig,
    queue: VecDeque<Queued>,
    unacked: BTreeMap<u32, Unacked>,
    next_rel_seq: u32,
    next_be_seq: u32,
    highest_acked: u32,
    srtt_us: Option<f64>,
    rttvar_us: f64,
    rto_us: u64,
    pacing_next_us: u64,
    closed: bool,
    fin_seq: Option<u32>,
    aborted: bool,
    pub bytes_sent: u64,
    pub offered_reliable: u64,
    pub offered_best_effort: u64,
    pub retransmissions: u64,
    first_emit_us: Option<u64>,
    completed_us: Option<u64>,
    /// Bytes emitted per whole second, for the 1 s rate series.
    sent_per_sec: BTreeMap<u64, u64>,
}

impl SenderState {
    pub fn new(stream_id: u16, config: SenderConfig) -> Self {
        let rto = config.rto_floor_us;
        SenderState {
            stream_id,
            config,
            queue: VecDeque::new(),
            unacked: BTreeMap::new(),
            next_rel_seq: 1,
            next_be_seq: 1,
            highest_acked: 0,
            srtt_us: None,
            rttvar_us: 0.0,
            rto_us: rto,
            pacing_next_us: 0,
            closed: false,
            fin_seq: None,
            aborted: false,
            bytes_sent: 0,
            offered_reliable: 0,
            offered_best_effort: 0,
            retransmissions: 0,
            first_emit_us: None,
            completed_us: None,
            sent_per_sec: BTreeMap::new(),
        }
    }

    pub fn srtt_us(&self) -> Option<u64> {
        self.srtt_us.map(|v| v.round() as u64)
    }

    pub fn rto_us(&self) -> u64 {
        self.rto_us
    }

    pub fn unacked_len(&self) -> usize {
        self.unacked.len()
    }

    pub fn first_emit_us(&self) -> Option<u64> {
        self.first_emit_us
    }

    pub fn completed_us(&self) -> Option<u64> {
        self.completed_us
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    /// All submitted messages emitted and every reliable one acked
    /// (including the FIN).
    pub fn is_complete(&self) -> bool {
        self.completed_us.is_some()
    }

    /// Queue one application message. Reliable messages draw from the
    /// reliable seq space so cumulative acks stay contiguous.
    pub fn submit(&mut self, payload: &[u8], reliable: bool) -> Result<(), ProtoError> {
        if self.closed || self.aborted {
            return Err(ProtoError::StreamClosed);
        }
        if payload.len() > MAX_PAYLOAD {
            return Err(ProtoError::PayloadTooLarge(payload.len()));
        }
        let (seq, flags) = if reliable {
            let s = self.next_rel_seq;
            self.next_rel_seq += 1;
            self.offered_reliable += 1;
            (s, FLAG_RELIABLE)
        } else {
            let s = self.next_be_seq;
            self.next_be_seq += 1;
            self.offered_best_effort += 1;
            (s, 0)
        };
        self.queue.push_back(Queued {
            seq,
            flags,
            payload: payload.to_vec(),
        });
        Ok(())
    }

    /// No further submissions; a FIN is emitted once queue and unacked
    /// buffer have drained.
    pub fn close(&mut self) {
        self.closed = true;
    }

    fn serialization_us(&self, wire_len: usize) -> u64 {
        (wire_len as u64 * 8 * 1_000_000).div_ceil(self.config.pacing_rate_bps.max(1))
    }

    fn record_emit(&mut self, now_us: u64, wire_len: usize) {
        self.bytes_sent += wire_len as u64;
        *self.sent_per_sec.entry(now_us / 1_000_000).or_insert(0) += wire_len as u64;
        if self.first_emit_us.is_none() {
            self.first_emit_us = Some(now_us);
        }
    }

    /// Emit paced datagrams: overdue retransmissions first, then fresh
    /// queue entries, then the FIN once everything has drained.
    pub fn on_tick(&mut self, now_us: u64) -> Result<Vec<Vec<u8>>, ProtoError> {
        if self.aborted {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        // Pacing credit never accumulates beyond one max datagram.
        let max_cost = self.serialization_us(HEADER_LEN + MAX_PAYLOAD);
        if self.pacing_next_us + max_cost < now_us {
            self.pacing_next_us = now_us.saturating_sub(max_cost);
        }

        // Retransmissions of timed-out reliable entries.
        let due: Vec<u32> = self
            .unacked
            .iter()
            .filter(|(_, u)| u.next_retx_us <= now_us)
            .map(|(&seq, _)| seq)
            .collect();
        for seq in due {
            if self.pacing_next_us > now_us {
                break;
            }
            let entry = self.unacked.get_mut(&seq).expect("due entry");
            if entry.retries >= self.config.retry_limit {
                self.aborted = true;
                return Err(ProtoError::RetryLimitExceeded(seq));
            }
            entry.retries += 1;
            entry.rto_us = (entry.rto_us * 2).min(self.config.rto_cap_us);
            entry.next_retx_us = now_us + entry.rto_us;
            let header = CustomHeader::new(entry.flags, self.stream_id, seq, now_us, 0);
            let bytes = encode_datagram(&header, &entry.payload.clone()).expect("valid header");
            self.pacing_next_us += self.serialization_us(bytes.len());
            self.retransmissions += 1;
            self.record_emit(now_us, bytes.len());
            out.push(bytes);
        }

        // Fresh transmissions up to the pacing budget.
        while self.pacing_next_us <= now_us {
            let Some(msg) = self.queue.pop_front() else {
                break;
            };
            let header = CustomHeader::new(msg.flags, self.stream_id, msg.seq, now_us, 0);
            let bytes = encode_datagram(&header, &msg.payload).expect("valid header");
            self.pacing_next_us += self.serialization_us(bytes.len());
            if msg.flags & FLAG_RELIABLE != 0 {
                self.unacked.insert(
                    msg.seq,
                    Unacked {
                        flags: msg.flags,
                        payload: msg.payload,
                        retries: 0,
                        overtaken: 0,
                        rto_us: self.rto_us,
                        next_retx_us: now_us + self.rto_us,
                    },
                );
            }
            self.record_emit(now_us, bytes.len());
            out.push(bytes);
        }

        // FIN: reliable, consumes the next reliable seq, emitted only
        // after the data queue and unacked buffer are both empty.
        if self.closed
            && self.fin_seq.is_none()
            && self.queue.is_empty()
            && self.unacked.is_empty()
            && self.pacing_next_us <= now_us
        {
            let seq = self.next_rel_seq;
            self.next_rel_seq += 1;
            self.fin_seq = Some(seq);
            let flags = FLAG_RELIABLE | FLAG_FIN;
            let header = CustomHeader::new(flags, self.stream_id, seq, now_us, 0);
            let bytes = encode_datagram(&header, &[]).expect("valid header");
            self.unacked.insert(
                seq,
                Unacked {
                    flags,
                    payload: Vec::new(),
                    retries: 0,
                    overtaken: 0,
                    rto_us: self.rto_us,
                    next_retx_us: now_us + self.rto_us,
                },
            );
            self.pacing_next_us += self.serialization_us(bytes.len());
            self.record_emit(now_us, bytes.len());
            out.push(bytes);
        }
        Ok(out)
    }

    /// Consume an ack. Every ack names the datagram that triggered it
    /// (`echoed_seq`), carries the receiver's cumulative point
    /// (`ack_seq`), and lists the seqs held above that point
    /// (`sacked`, big-endian u32s); all three release entries, so a
    /// delivered datagram is never retransmitted just because an
    /// earlier hole withholds the cumulative point or a previous ack
    /// was lost. The RTT estimator (gains 1/8 and 1/4) samples only
    /// acks that release something, which skips stale duplicates.
    pub fn on_ack(
        &mut self,
        ack_seq: u32,
        echoed_seq: u32,
        sacked: &[u8],
        echo_timestamp_us: u64,
        now_us: u64,
    ) {
        let mut fresh = self.unacked.remove(&echoed_seq).is_some();
        let mut highest_released = echoed_seq.max(ack_seq);
        for chunk in sacked.chunks_exact(4) {
            let s = u32::from_be_bytes(chunk.try_into().expect("4-byte chunk"));
            fresh |= self.unacked.remove(&s).is_some();
            highest_released = highest_released.max(s);
        }
        // Entries overtaken by three acks for higher seqs are lost, not
        // late: the path and the reliable class are FIFO. Pull their
        // timers forward instead of sitting out the remaining backoff.
        for (_, entry) in self.unacked.range_mut(..highest_released) {
            entry.overtaken += 1;
            if entry.overtaken >= 3 {
                entry.overtaken = 0;
                entry.next_retx_us = now_us;
            }
        }
        if ack_seq > self.highest_acked {
            self.highest_acked = ack_seq;
            let covered: Vec<u32> = self
                .unacked
                .range(..=ack_seq)
                .map(|(&s, _)| s)
                .collect();
            fresh |= !covered.is_empty();
            for seq in covered {
                self.unacked.remove(&seq);
            }
        }
        if fresh && now_us > echo_timestamp_us {
            let sample = (now_us - echo_timestamp_us) as f64;
            match self.srtt_us {
                None => {
                    self.srtt_us = Some(sample);
                    self.rttvar_us = sample / 2.0;
                }
                Some(srtt) => {
                    self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * (srtt - sample).abs();
                    self.srtt_us = Some(srtt + (sample - srtt) / 8.0);
                }
            }
            let rto = self.srtt_us.unwrap() + 4.0 * self.rttvar_us;
            self.rto_us = (rto as u64)
                .clamp(self.config.rto_floor_us, self.config.rto_cap_us);
        }
        if self.closed
            && self.fin_seq.is_some()
            && self.unacked.is_empty()
            && self.completed_us.is_none()
        {
            self.completed_us = Some(now_us);
        }
    }

    pub fn sent_rate_series(&self) -> Vec<(u64, f64)> {
        self.sent_per_sec
            .iter()
            .map(|(&s, &b)| (s, b as f64 * 8.0))
            .collect()
    }
}

/// One application-visible delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub payload: Vec<u8>,
    pub reliable: bool,
}

#[derive(Debug, Default)]
pub struct ReceiverOutput {
    pub deliveries: Vec<Delivery>,
    pub ack: Option<Vec<u8>>,
}

#[derive(Debug)]
pub struct ReceiverState {
    /// Emit an ACK every Nth reliable arrival.
    ack_every: u32,
    rel_since_ack: u32,
    ack_seq: u32,
    /// Reliable seqs received beyond the cumulative point.
    out_of_order: BTreeSet<u32>,
    pub delivered_reliable: u64,
    pub delivered_best_effort: u64,
    pub delivered_legacy: u64,
    pub duplicates: u64,
    pub corrupt: u64,
    fin_delivered_us: Option<u64>,
    recv_per_sec: BTreeMap<u64, u64>,
}

impl Default for ReceiverState {
    fn default() -> Self {
        Self::new(1)
    }
}

impl ReceiverState {
    pub fn new(ack_every: u32) -> Self {
        ReceiverState {
            ack_every: ack_every.max(1),
            rel_since_ack: 0,
            ack_seq: 0,
            out_of_order: BTreeSet::new(),
            delivered_reliable: 0,
            delivered_best_effort: 0,
            delivered_legacy: 0,
            duplicates: 0,
            corrupt: 0,
            fin_delivered_us: None,
            recv_per_sec: BTreeMap::new(),
        }
    }

    pub fn ack_seq(&self) -> u32 {
        self.ack_seq
    }

    pub fn fin_delivered_us(&self) -> Option<u64> {
        self.fin_delivered_us
    }

    /// Consume a datagram. Reliable payloads are delivered once on
    /// first receipt; the cumulative ack advances over contiguous
    /// reliable seqs; duplicates are suppressed but still acked so a
    /// lost ACK does not stall the sender.
    pub fn on_datagram(&mut self, bytes: &[u8], now_us: u64) -> ReceiverOutput {
        let mut out = ReceiverOutput::default();
        let decoded = match decode_header(bytes) {
            Ok(d) => d,
            Err(_) => {
                self.corrupt += 1;
                return out;
            }
        };
        match decoded {
            Decoded::Legacy(payload) => {
                self.delivered_legacy += 1;
                self.record_recv(now_us, payload.len());
                out.deliveries.push(Delivery {
                    payload,
                    reliable: false,
                });
            }
            Decoded::Header { header, payload } => {
                if header.is_ack() {
                    // Data receivers ignore stray ACK datagrams.
                    return out;
                }
                if header.is_reliable() {
                    let fresh = header.seq > self.ack_seq
                        && !self.out_of_order.contains(&header.seq);
                    if fresh {
                        self.out_of_order.insert(header.seq);
                        while self.out_of_order.remove(&(self.ack_seq + 1)) {
                            self.ack_seq += 1;
                        }
                        if header.is_fin() {
                            self.fin_delivered_us.get_or_insert(now_us);
                        } else {
                            self.delivered_reliable += 1;
                            self.record_recv(now_us, payload.len());
                            out.deliveries.push(Delivery {
                                payload,
                                reliable: true,
                            });
                        }
                    } else {
                        self.duplicates += 1;
                    }
                    self.rel_since_ack += 1;
                    if self.rel_since_ack >= self.ack_every {
                        self.rel_since_ack = 0;
                        // The ack names the datagram that triggered it
                        // and echoes its timestamp, alongside the
                        // cumulative point. Its payload lists the seqs
                        // held above the cumulative point, so a single
                        // surviving ack makes up for earlier lost ones.
                        let ack = CustomHeader::new(
                            FLAG_ACK,
                            header.stream_id,
                            header.seq,
                            header.timestamp_us,
                            self.ack_seq,
                        );
                        let mut sack = Vec::with_capacity(4 * self.out_of_order.len().min(64));
                        for &s in self.out_of_order.iter().take(64) {
                            sack.extend_from_slice(&s.to_be_bytes());
                        }
                        out.ack = Some(encode_datagram(&ack, &sack).expect("valid ack"));
                    }
                } else {
                    self.delivered_best_effort += 1;
                    self.record_recv(now_us, payload.len());
                    out.deliveries.push(Delivery {
                        payload,
                        reliable: false,
                    });
                }
            }
        }
        out
    }

    fn record_recv(&mut self, now_us: u64, payload_len: usize) {
        *self.recv_per_sec.entry(now_us / 1_000_000).or_insert(0) +=
            (payload_len + HEADER_LEN) as u64;
    }

    pub fn recv_rate_series(&self) -> Vec<(u64, f64)> {
        self.recv_per_sec
            .iter()
            .map(|(&s, &b)| (s, b as f64 * 8.0))
            .collect()
    }
}

/// End-of-flow statistics for the three-way protocol comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub offered_reliable: u64,
    pub offered_best_effort: u64,
    pub delivered_reliable: u64,
    pub delivered_best_effort: u64,
    pub duplicates: u64,
    pub retransmissions: u64,
    pub flow_completion_time_s: f64,
    /// (second, bps) samples at 1 s granularity.
    pub send_rate_series: Vec<(u64, f64)>,
    pub recv_rate_series: Vec<(u64, f64)>,
}

impl FlowStats {
    pub fn reliable_ratio(&self) -> f64 {
        if self.offered_reliable == 0 {
            1.0
        } else {
            self.delivered_reliable as f64 / self.offered_reliable as f64
        }
    }

    pub fn best_effort_ratio(&self) -> f64 {
        if self.offered_best_effort == 0 {
            1.0
        } else {
            self.delivered_best_effort as f64 / self.offered_best_effort as f64
        }
    }

    pub fn mean_send_rate_bps(&self) -> f64 {
        if self.send_rate_series.is_empty() {
            return 0.0;
        }
        let total: f64 = self.send_rate_series.iter().map(|(_, b)| b).sum();
        total / self.send_rate_series.len() as f64
    }
}

/// Assemble flow statistics once the stream has finished on both ends.
///
/// FCT runs from the first emission to the later of all-reliable-acked
/// and FIN-delivered.
pub fn flow_stats(
    receiver: &ReceiverState,
    sender: &SenderState,
) -> Result<FlowStats, ProtoError> {
    let (start, sender_done, fin_at) = match (
        sender.first_emit_us(),
        sender.completed_us(),
        receiver.fin_delivered_us(),
    ) {
        (Some(s), Some(c), Some(f)) => (s, c, f),
        _ if sender.is_aborted() => (
            sender.first_emit_us().unwrap_or(0),
            sender.first_emit_us().unwrap_or(0),
            receiver.fin_delivered_us().unwrap_or(0),
        ),
        _ => return Err(ProtoError::StreamIncomplete),
    };
    let end = sender_done.max(fin_at);
    Ok(FlowStats {
        offered_reliable: sender.offered_reliable,
        offered_best_effort: sender.offered_best_effort,
        delivered_reliable: receiver.delivered_reliable,
        delivered_best_effort: receiver.delivered_best_effort,
        duplicates: receiver.duplicates,
        retransmissions: sender.retransmissions,
        flow_completion_time_s: end.saturating_sub(start) as f64 / 1e6,
        send_rate_series: sender.sent_rate_series(),
        recv_rate_series: receiver.recv_rate_series(),
    })
}
