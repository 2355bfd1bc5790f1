//! Reliable packet-stream sender and receiver.
//!
//! The sender paces transmissions, enforces the congestion window, detects
//! loss with a three-packet reordering threshold (equivalent to three
//! duplicate ACKs for the gap head) or a retransmission timeout, and feeds
//! RTT, delivery-rate and per-round loss information to its controller.
//!
//! Every transmission carries a unique packet number; retransmissions reuse
//! the segment's sequence number under a fresh packet number. The receiver
//! acknowledges every packet individually.

use std::collections::{BTreeSet, VecDeque};
use std::time::Duration;

use crate::cc::CongestionControl;
use crate::rtt::RttEstimator;
use crate::sampler::{BandwidthSampler, RateSample, SendSnapshot};
use crate::time::{Rate, SimTime, MSS};

/// Packets acknowledged after a gap before the gap head is declared lost.
pub const REORDER_THRESHOLD: u64 = 3;

pub type FlowId = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Packet {
    pub flow_id: FlowId,
    /// Transmission number, unique per transmission.
    pub pn: u64,
    /// Segment sequence number, shared by a segment's retransmissions.
    pub seq: u64,
    pub size_bytes: u32,
    pub sent_time: SimTime,
    pub is_retransmission: bool,
    pub delivered_at_send: u64,
    pub app_limited_at_send: bool,
}

/// Per-packet acknowledgement: identifies the packet that triggered it and
/// carries the cumulative in-order point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ack {
    pub flow_id: FlowId,
    pub pn: u64,
    pub seq: u64,
    /// Next in-order segment the receiver expects.
    pub cum_ack: u64,
}

/// Loss and delivery counts for one completed round trip.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RoundSummary {
    pub round: u64,
    pub delivered_packets: u64,
    pub lost_packets: u64,
    pub delivered_bytes: u64,
    pub lost_bytes: u64,
    /// Minimum RTT sampled during the round.
    pub min_rtt: Option<Duration>,
    /// Minimum RTT sampled during the round before it.
    pub prev_min_rtt: Option<Duration>,
}

impl RoundSummary {
    /// `lost / (lost + delivered)`; zero for an empty round.
    pub fn loss_rate(&self) -> f64 {
        loss_fraction(self.lost_packets, self.delivered_packets)
    }
}

fn loss_fraction(lost: u64, delivered: u64) -> f64 {
    let total = lost + delivered;
    if total == 0 {
        0.0
    } else {
        lost as f64 / total as f64
    }
}

/// Losses declared while processing one ACK or timeout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEvent {
    pub now: SimTime,
    pub lost_packets: u64,
    pub lost_bytes: u64,
    /// Send time of the most recently sent packet among those lost.
    pub largest_lost_sent_time: SimTime,
    pub from_rto: bool,
}

/// Everything a controller learns from one ACK.
#[derive(Clone, Debug, PartialEq)]
pub struct AckSummary {
    pub now: SimTime,
    /// Bytes of this transmission newly removed from flight (0 for stale ACKs).
    pub newly_acked_bytes: u64,
    pub rtt_sample: Option<Duration>,
    pub bw_sample: Option<RateSample>,
    pub losses_declared: u64,
    pub lost_bytes: u64,
    pub round_start: bool,
    pub round_count: u64,
    /// Statistics of the round that this ACK closed, if any.
    pub round_end: Option<RoundSummary>,
    pub prior_inflight: u64,
    pub inflight_bytes: u64,
    pub delivered_total: u64,
    pub stale: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowCounters {
    /// Bytes of every transmission, retransmissions included.
    pub bytes_sent: u64,
    /// Bytes of transmissions that were acknowledged while outstanding.
    pub bytes_acked: u64,
    /// Bytes of transmissions declared lost.
    pub bytes_lost: u64,
    pub bytes_retransmitted: u64,
    pub packets_sent: u64,
    pub packets_retransmitted: u64,
    pub packets_lost: u64,
    /// Unique application bytes acknowledged.
    pub goodput_bytes: u64,
    pub stale_acks: u64,
    pub rto_count: u64,
}

#[derive(Clone, Copy, Debug)]
struct SentRecord {
    seq: u64,
    size: u32,
    sent_time: SimTime,
    is_retx: bool,
    snap: SendSnapshot,
}

/// Which segments have been acknowledged: everything below `cum`, plus a
/// set of out-of-order segments above it.
#[derive(Clone, Debug, Default)]
struct SegmentTracker {
    cum: u64,
    above: BTreeSet<u64>,
}

impl SegmentTracker {
    fn contains(&self, seq: u64) -> bool {
        seq < self.cum || self.above.contains(&seq)
    }

    /// Returns true if `seq` was not already marked.
    fn insert(&mut self, seq: u64) -> bool {
        if self.contains(seq) {
            return false;
        }
        if seq == self.cum {
            self.cum += 1;
            while self.above.remove(&self.cum) {
                self.cum += 1;
            }
        } else {
            self.above.insert(seq);
        }
        true
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct RoundCounters {
    delivered_packets: u64,
    lost_packets: u64,
    delivered_bytes: u64,
    lost_bytes: u64,
}

/// What happened during one `maybe_send` call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SendOutcome {
    pub sent: usize,
    /// Earliest time pacing allows the next transmission.
    pub next_wakeup: Option<SimTime>,
    pub cwnd_limited: bool,
    pub app_limited: bool,
}

/// Sender half of a flow.
#[derive(Debug)]
pub struct TransportFlow {
    flow_id: FlowId,
    cc: Box<dyn CongestionControl>,
    rtt: RttEstimator,
    sampler: BandwidthSampler,

    /// Remaining application bytes; `None` for an always-backlogged sender.
    app_remaining: Option<u64>,
    next_seq: u64,
    next_pn: u64,
    base_pn: u64,
    sent: VecDeque<Option<SentRecord>>,
    inflight_bytes: u64,
    largest_acked_pn: Option<u64>,
    loss_scan_pn: u64,
    retx_queue: VecDeque<u64>,
    acked_segments: SegmentTracker,
    highest_cum_ack: u64,
    dup_ack_count: u64,

    next_send_time: SimTime,
    rto_backoff: u32,
    rto_base_time: SimTime,

    next_round_delivered: u64,
    round_count: u64,
    round: RoundCounters,

    counters: FlowCounters,
}

impl TransportFlow {
    pub fn new(flow_id: FlowId, cc: Box<dyn CongestionControl>) -> Self {
        TransportFlow {
            flow_id,
            cc,
            rtt: RttEstimator::new(),
            sampler: BandwidthSampler::new(),
            app_remaining: None,
            next_seq: 0,
            next_pn: 0,
            base_pn: 0,
            sent: VecDeque::new(),
            inflight_bytes: 0,
            largest_acked_pn: None,
            loss_scan_pn: 0,
            retx_queue: VecDeque::new(),
            acked_segments: SegmentTracker::default(),
            highest_cum_ack: 0,
            dup_ack_count: 0,
            next_send_time: SimTime::ZERO,
            rto_backoff: 0,
            rto_base_time: SimTime::ZERO,
            next_round_delivered: 0,
            round_count: 0,
            round: RoundCounters::default(),
            counters: FlowCounters::default(),
        }
    }

    /// Limits the application to `bytes` of data instead of a bulk backlog.
    pub fn with_app_limit(mut self, bytes: u64) -> Self {
        self.app_remaining = Some(bytes);
        self
    }

    /// Adds application data (for app-limited senders).
    pub fn push_app_data(&mut self, bytes: u64) {
        if let Some(rem) = self.app_remaining.as_mut() {
            *rem += bytes;
        }
    }

    pub fn flow_id(&self) -> FlowId {
        self.flow_id
    }

    pub fn cc(&self) -> &dyn CongestionControl {
        self.cc.as_ref()
    }

    pub fn cc_mut(&mut self) -> &mut dyn CongestionControl {
        self.cc.as_mut()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn counters(&self) -> &FlowCounters {
        &self.counters
    }

    pub fn inflight_bytes(&self) -> u64 {
        self.inflight_bytes
    }

    pub fn cwnd_bytes(&self) -> u64 {
        self.cc.cwnd()
    }

    pub fn pacing_rate(&self) -> Rate {
        self.cc.pacing_rate()
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn highest_acked(&self) -> u64 {
        self.highest_cum_ack
    }

    pub fn dup_ack_count(&self) -> u64 {
        self.dup_ack_count
    }

    pub fn round_count(&self) -> u64 {
        self.round_count
    }

    pub fn delivered(&self) -> u64 {
        self.sampler.delivered()
    }

    pub fn is_app_limited(&self) -> bool {
        self.sampler.is_app_limited()
    }

    /// Loss fraction over the round in progress.
    pub fn loss_rate_current_round(&self) -> f64 {
        loss_fraction(self.round.lost_packets, self.round.delivered_packets)
    }

    /// Declared-lost transmissions awaiting retransmission.
    pub fn pending_retransmissions(&self) -> usize {
        self.retx_queue.len()
    }

    /// Every segment is a full MSS; a short application tail is padded.
    fn segment_size(&self, _seq: u64) -> u32 {
        MSS as u32
    }

    fn has_new_data(&self) -> bool {
        self.app_remaining.is_none_or(|rem| rem > 0)
    }

    /// Sends every packet that pacing and the congestion window allow at
    /// `now`, appending them to `out`.
    pub fn maybe_send(&mut self, now: SimTime, out: &mut Vec<Packet>) -> SendOutcome {
        let mut outcome = SendOutcome::default();
        loop {
            while let Some(&seq) = self.retx_queue.front() {
                if self.acked_segments.contains(seq) {
                    self.retx_queue.pop_front();
                } else {
                    break;
                }
            }
            let retx = self.retx_queue.front().copied();
            if retx.is_none() && !self.has_new_data() {
                outcome.app_limited = true;
                self.sampler.mark_app_limited(self.inflight_bytes);
                break;
            }
            let cwnd = self.cc.cwnd();
            if self.inflight_bytes + MSS > cwnd {
                outcome.cwnd_limited = true;
                break;
            }
            if now < self.next_send_time {
                outcome.next_wakeup = Some(self.next_send_time);
                break;
            }
            let pkt = match retx {
                Some(seq) => {
                    self.retx_queue.pop_front();
                    self.transmit(now, seq, true)
                }
                None => {
                    let seq = self.next_seq;
                    self.next_seq += 1;
                    if let Some(rem) = self.app_remaining.as_mut() {
                        *rem -= (*rem).min(MSS);
                    }
                    self.transmit(now, seq, false)
                }
            };
            let gap = self.cc.pacing_rate().transmit_time(pkt.size_bytes as u64);
            self.next_send_time = self.next_send_time.max(now) + gap;
            out.push(pkt);
            outcome.sent += 1;
        }
        outcome
    }

    fn transmit(&mut self, now: SimTime, seq: u64, is_retx: bool) -> Packet {
        let size = self.segment_size(seq);
        if self.inflight_bytes == 0 {
            self.rto_base_time = now;
        }
        let snap = self.sampler.on_send(now, self.inflight_bytes, size as u64);
        let pn = self.next_pn;
        self.next_pn += 1;
        self.sent.push_back(Some(SentRecord {
            seq,
            size,
            sent_time: now,
            is_retx,
            snap,
        }));
        self.inflight_bytes += size as u64;
        self.counters.bytes_sent += size as u64;
        self.counters.packets_sent += 1;
        if is_retx {
            self.counters.bytes_retransmitted += size as u64;
            self.counters.packets_retransmitted += 1;
        }
        let pkt = Packet {
            flow_id: self.flow_id,
            pn,
            seq,
            size_bytes: size,
            sent_time: now,
            is_retransmission: is_retx,
            delivered_at_send: snap.delivered,
            app_limited_at_send: snap.is_app_limited,
        };
        self.cc.on_packet_sent(now, &pkt, self.inflight_bytes);
        pkt
    }

    fn record_mut(&mut self, pn: u64) -> Option<&mut Option<SentRecord>> {
        let idx = pn.checked_sub(self.base_pn)?;
        self.sent.get_mut(idx as usize)
    }

    fn prune_front(&mut self) {
        while let Some(None) = self.sent.front() {
            self.sent.pop_front();
            self.base_pn += 1;
        }
    }

    fn declare_lost(&mut self, rec: SentRecord) {
        let size = rec.size as u64;
        self.inflight_bytes -= size;
        self.counters.bytes_lost += size;
        self.counters.packets_lost += 1;
        self.sampler.on_lost(size);
        self.round.lost_packets += 1;
        self.round.lost_bytes += size;
        self.retx_queue.push_back(rec.seq);
    }

    /// Processes one acknowledgement and informs the controller.
    pub fn on_ack(&mut self, ack: &Ack, now: SimTime) -> AckSummary {
        let prior_inflight = self.inflight_bytes;
        if ack.cum_ack > self.highest_cum_ack {
            self.highest_cum_ack = ack.cum_ack;
            self.dup_ack_count = 0;
        } else {
            self.dup_ack_count += 1;
        }
        if self.acked_segments.insert(ack.seq) {
            self.counters.goodput_bytes += self.segment_size(ack.seq) as u64;
        }

        let record = self.record_mut(ack.pn).and_then(|slot| slot.take());
        let Some(rec) = record else {
            // Already acknowledged, or declared lost before this ACK arrived.
            self.counters.stale_acks += 1;
            return AckSummary {
                now,
                newly_acked_bytes: 0,
                rtt_sample: None,
                bw_sample: None,
                losses_declared: 0,
                lost_bytes: 0,
                round_start: false,
                round_count: self.round_count,
                round_end: None,
                prior_inflight,
                inflight_bytes: self.inflight_bytes,
                delivered_total: self.sampler.delivered(),
                stale: true,
            };
        };

        let size = rec.size as u64;
        self.inflight_bytes -= size;
        self.counters.bytes_acked += size;
        self.rto_backoff = 0;
        self.rto_base_time = now;
        self.round.delivered_packets += 1;
        self.round.delivered_bytes += size;

        let bw_sample = self
            .sampler
            .on_ack(now, &rec.snap, rec.sent_time, size, self.rtt.min_rtt());
        // Karn: a retransmitted segment's ACK is never an RTT sample.
        let rtt_sample = if rec.is_retx {
            None
        } else {
            Some(now.saturating_since(rec.sent_time)).filter(|d| !d.is_zero())
        };

        // Reordering-threshold loss detection.
        let mut losses = 0u64;
        let mut lost_bytes = 0u64;
        let mut largest_lost_sent = SimTime::ZERO;
        let largest = self.largest_acked_pn.map_or(ack.pn, |l| l.max(ack.pn));
        self.largest_acked_pn = Some(largest);
        if largest >= REORDER_THRESHOLD {
            let limit = largest - REORDER_THRESHOLD;
            let mut pn = self.loss_scan_pn.max(self.base_pn);
            while pn <= limit {
                if let Some(rec) = self.record_mut(pn).and_then(|slot| slot.take()) {
                    losses += 1;
                    lost_bytes += rec.size as u64;
                    largest_lost_sent = largest_lost_sent.max(rec.sent_time);
                    self.declare_lost(rec);
                }
                pn += 1;
            }
            self.loss_scan_pn = self.loss_scan_pn.max(limit + 1);
        }
        self.prune_front();

        // Round accounting: a round ends once a packet sent after the
        // previous round's end marker is delivered.
        let mut round_end = None;
        let round_start = rec.snap.delivered >= self.next_round_delivered;
        if round_start {
            self.next_round_delivered = self.sampler.delivered();
            round_end = Some(RoundSummary {
                round: self.round_count,
                delivered_packets: self.round.delivered_packets,
                lost_packets: self.round.lost_packets,
                delivered_bytes: self.round.delivered_bytes,
                lost_bytes: self.round.lost_bytes,
                min_rtt: self.rtt.minrtt_curr_round(),
                prev_min_rtt: self.rtt.minrtt_prev_round(),
            });
            self.round_count += 1;
            self.round = RoundCounters::default();
            self.rtt.on_round_start();
        }
        if let Some(rtt) = rtt_sample {
            self.rtt.on_sample(rtt, now);
        }

        let summary = AckSummary {
            now,
            newly_acked_bytes: size,
            rtt_sample,
            bw_sample,
            losses_declared: losses,
            lost_bytes,
            round_start,
            round_count: self.round_count,
            round_end,
            prior_inflight,
            inflight_bytes: self.inflight_bytes,
            delivered_total: self.sampler.delivered(),
            stale: false,
        };
        if losses > 0 {
            self.cc.on_loss_declared(&LossEvent {
                now,
                lost_packets: losses,
                lost_bytes,
                largest_lost_sent_time: largest_lost_sent,
                from_rto: false,
            });
        }
        if let Some(r) = &round_end {
            self.cc.on_round_start(r, &self.rtt);
        }
        self.cc.on_ack(&summary, &self.rtt);
        summary
    }

    /// Current retransmission timeout including backoff.
    pub fn rto(&self) -> Duration {
        self.rtt.rto(self.rto_backoff)
    }

    /// When the retransmission timer fires, if data is outstanding.
    pub fn rto_deadline(&self) -> Option<SimTime> {
        if self.inflight_bytes == 0 {
            None
        } else {
            self.rto_base_time.checked_add(self.rto())
        }
    }

    /// Handles a timer wakeup. Returns the timeout's loss event if the
    /// timer had actually expired.
    pub fn on_rto_timer(&mut self, now: SimTime) -> Option<LossEvent> {
        match self.rto_deadline() {
            Some(deadline) if now >= deadline => Some(self.on_rto(now)),
            _ => None,
        }
    }

    /// Retransmission timeout: every outstanding transmission is declared
    /// lost and queued for retransmission, oldest first, and the timer
    /// backs off.
    pub fn on_rto(&mut self, now: SimTime) -> LossEvent {
        let mut lost_packets = 0;
        let mut lost_bytes = 0;
        let mut largest_lost_sent = SimTime::ZERO;
        let mut lost = Vec::new();
        for slot in self.sent.iter_mut() {
            if let Some(rec) = slot.take() {
                lost.push(rec);
            }
        }
        for rec in lost {
            lost_packets += 1;
            lost_bytes += rec.size as u64;
            largest_lost_sent = largest_lost_sent.max(rec.sent_time);
            self.declare_lost(rec);
        }
        self.prune_front();
        self.loss_scan_pn = self.next_pn;
        self.rto_backoff = self.rto_backoff.saturating_add(1);
        self.rto_base_time = now;
        self.counters.rto_count += 1;
        let event = LossEvent {
            now,
            lost_packets,
            lost_bytes,
            largest_lost_sent_time: largest_lost_sent,
            from_rto: true,
        };
        self.cc.on_loss_declared(&event);
        self.cc.on_rto(now);
        event
    }

    /// Checks the byte conservation law:
    /// `bytes_sent == bytes_acked + inflight + bytes_lost`, and that the
    /// inflight counter matches the outstanding transmissions.
    pub fn check_conservation(&self) -> Result<(), String> {
        let c = &self.counters;
        if c.bytes_sent != c.bytes_acked + self.inflight_bytes + c.bytes_lost {
            return Err(format!(
                "flow {}: sent {} != acked {} + inflight {} + lost {}",
                self.flow_id, c.bytes_sent, c.bytes_acked, self.inflight_bytes, c.bytes_lost
            ));
        }
        let outstanding: u64 = self.sent.iter().flatten().map(|r| r.size as u64).sum();
        if outstanding != self.inflight_bytes {
            return Err(format!(
                "flow {}: inflight counter {} != outstanding {}",
                self.flow_id, self.inflight_bytes, outstanding
            ));
        }
        Ok(())
    }
}

/// Receiver half of a flow: acknowledges every packet.
#[derive(Clone, Debug, Default)]
pub struct Receiver {
    segments: SegmentTracker,
    unique_bytes: u64,
    packets: u64,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_packet(&mut self, pkt: &Packet) -> Ack {
        self.packets += 1;
        if self.segments.insert(pkt.seq) {
            self.unique_bytes += pkt.size_bytes as u64;
        }
        Ack {
            flow_id: pkt.flow_id,
            pn: pkt.pn,
            seq: pkt.seq,
            cum_ack: self.segments.cum,
        }
    }

    pub fn unique_bytes(&self) -> u64 {
        self.unique_bytes
    }

    pub fn packets(&self) -> u64 {
        self.packets
    }
}
