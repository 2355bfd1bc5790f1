//! Bottleneck link: rate source, droptail queue, random loss and jitter.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use ccsim_core::transport::Packet;
use ccsim_core::{Rate, SimTime, MSS};

use crate::SimError;

/// Piecewise-constant rate schedule over closed-left intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSchedule {
    steps: Vec<(SimTime, Rate)>,
}

impl StepSchedule {
    /// Steps must be non-empty, sorted by time, and have positive rates.
    pub fn new(steps: Vec<(SimTime, Rate)>) -> Result<Self, SimError> {
        if steps.is_empty() {
            return Err(SimError::Config("step schedule is empty".into()));
        }
        if steps.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(SimError::Config("step schedule times must be non-decreasing".into()));
        }
        if steps.iter().any(|s| !(s.1.bytes_per_sec() > 0.0) || !s.1.is_finite()) {
            return Err(SimError::Config("step rates must be positive and finite".into()));
        }
        Ok(StepSchedule { steps })
    }

    /// Builds a schedule from `(seconds, Mbps)` pairs.
    pub fn from_secs_mbps(steps: &[(f64, f64)]) -> Result<Self, SimError> {
        Self::new(
            steps
                .iter()
                .map(|&(t, r)| (SimTime::from_secs_f64(t), Rate::from_mbps(r)))
                .collect(),
        )
    }

    /// Rate of the latest step starting at or before `t`; the first step's
    /// rate before the schedule begins.
    pub fn rate_at(&self, t: SimTime) -> Rate {
        let idx = self.steps.partition_point(|s| s.0 <= t);
        self.steps[idx.saturating_sub(1)].1
    }

    pub fn steps(&self) -> &[(SimTime, Rate)] {
        &self.steps
    }
}

/// Mahimahi-style delivery-opportunity trace: each millisecond timestamp
/// lets one MSS-sized packet leave. The trace repeats with period equal to
/// its last timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryTrace {
    opportunities_ms: Vec<u64>,
}

impl DeliveryTrace {
    pub fn new(opportunities_ms: Vec<u64>) -> Result<Self, SimError> {
        if opportunities_ms.is_empty() {
            return Err(SimError::Config("delivery trace is empty".into()));
        }
        if opportunities_ms.windows(2).any(|w| w[1] < w[0]) {
            return Err(SimError::Config("trace timestamps must be non-decreasing".into()));
        }
        if *opportunities_ms.last().unwrap() == 0 {
            return Err(SimError::Config("trace must span a positive duration".into()));
        }
        Ok(DeliveryTrace { opportunities_ms })
    }

    /// Parses one integer millisecond timestamp per line; blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = line.parse::<u64>().map_err(|e| {
                SimError::Config(format!("trace line {}: `{line}`: {e}", i + 1))
            })?;
            out.push(v);
        }
        Self::new(out)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("reading trace {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn loop_period_ms(&self) -> u64 {
        *self.opportunities_ms.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.opportunities_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opportunities_ms.is_empty()
    }

    /// Mean capacity over one period.
    pub fn mean_rate(&self) -> Rate {
        Rate::from_bytes_over(
            self.len() as u64 * MSS,
            Duration::from_millis(self.loop_period_ms()),
        )
    }

    fn time_of(&self, cursor: TraceCursor) -> SimTime {
        let ms = self.opportunities_ms[cursor.index] + cursor.lap * self.loop_period_ms();
        SimTime::from_millis(ms)
    }

    /// Earliest opportunity at or after `now`.
    pub fn next_opportunity(&self, now: SimTime) -> SimTime {
        let mut c = TraceCursor::default();
        self.seek(&mut c, now)
    }

    /// Moves `cursor` to the first unused opportunity at or after `now` and
    /// returns its time without consuming it.
    fn seek(&self, cursor: &mut TraceCursor, now: SimTime) -> SimTime {
        let period_ns = self.loop_period_ms() * 1_000_000;
        let lap_of_now = now.as_nanos() / period_ns;
        if lap_of_now > cursor.lap + 1 {
            // Skip whole idle periods at once.
            *cursor = TraceCursor {
                lap: lap_of_now - 1,
                index: 0,
            };
        }
        loop {
            let t = self.time_of(*cursor);
            if t >= now {
                return t;
            }
            cursor.index += 1;
            if cursor.index == self.opportunities_ms.len() {
                cursor.index = 0;
                cursor.lap += 1;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct TraceCursor {
    lap: u64,
    index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateSource {
    Constant(Rate),
    Steps(StepSchedule),
    Trace(DeliveryTrace),
}

impl RateSource {
    /// Nominal rate at `t` (mean rate for a trace).
    pub fn rate_at(&self, t: SimTime) -> Rate {
        match self {
            RateSource::Constant(r) => *r,
            RateSource::Steps(s) => s.rate_at(t),
            RateSource::Trace(tr) => tr.mean_rate(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match self {
            RateSource::Constant(r) if !(r.bytes_per_sec() > 0.0) || !r.is_finite() => Err(
                SimError::Config("link rate must be positive and finite".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Outcome of offering a packet to the bottleneck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enqueue {
    Queued,
    DroppedRandom,
    DroppedTail,
}

#[derive(Clone, Debug)]
pub struct QueuedPacket {
    pub pkt: Packet,
    pub enqueued_at: SimTime,
}

/// FIFO queue with a byte capacity that drops arrivals which do not fit.
#[derive(Clone, Debug)]
pub struct DroptailQueue {
    capacity_bytes: u64,
    occupancy_bytes: u64,
    drops: u64,
    packets: VecDeque<QueuedPacket>,
}

impl DroptailQueue {
    pub fn new(capacity_bytes: u64) -> Self {
        DroptailQueue {
            capacity_bytes,
            occupancy_bytes: 0,
            drops: 0,
            packets: VecDeque::new(),
        }
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn occupancy_bytes(&self) -> u64 {
        self.occupancy_bytes
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Returns false (and counts a drop) if the packet does not fit.
    pub fn offer(&mut self, pkt: Packet, now: SimTime) -> bool {
        let size = pkt.size_bytes as u64;
        if self.occupancy_bytes + size > self.capacity_bytes {
            self.drops += 1;
            return false;
        }
        self.occupancy_bytes += size;
        self.packets.push_back(QueuedPacket {
            pkt,
            enqueued_at: now,
        });
        true
    }

    pub fn pop(&mut self) -> Option<QueuedPacket> {
        let q = self.packets.pop_front()?;
        self.occupancy_bytes -= q.pkt.size_bytes as u64;
        Some(q)
    }
}

/// Gaussian per-packet delay added after the queue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterConfig {
    pub mean: Duration,
    pub sd: Duration,
}

impl JitterConfig {
    /// Standard deviation defaults to a quarter of the mean.
    pub fn with_mean(mean: Duration) -> Self {
        JitterConfig { mean, sd: mean / 4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkConfig {
    pub rate: RateSource,
    pub buffer_bytes: u64,
    pub loss_prob: f64,
    pub jitter: Option<JitterConfig>,
}

impl LinkConfig {
    pub fn constant(rate: Rate, buffer_bytes: u64) -> Self {
        LinkConfig {
            rate: RateSource::Constant(rate),
            buffer_bytes,
            loss_prob: 0.0,
            jitter: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.rate.validate()?;
        if self.buffer_bytes < MSS {
            return Err(SimError::Config(format!(
                "buffer of {} bytes cannot hold one packet",
                self.buffer_bytes
            )));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(SimError::Config(format!(
                "loss probability {} outside [0, 1]",
                self.loss_prob
            )));
        }
        Ok(())
    }
}

/// Per-link packet accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub injected: u64,
    pub delivered: u64,
    pub dropped_random: u64,
    pub dropped_droptail: u64,
    pub queued_at_end: u64,
    pub in_service_at_end: u64,
    pub max_occupancy_bytes: u64,
}

impl LinkStats {
    pub fn conserved(&self) -> bool {
        self.injected
            == self.delivered
                + self.dropped_random
                + self.dropped_droptail
                + self.queued_at_end
                + self.in_service_at_end
    }
}

/// The bottleneck's serving state.
#[derive(Debug)]
pub(crate) struct Link {
    pub config: LinkConfig,
    pub queue: DroptailQueue,
    pub in_service: Option<QueuedPacket>,
    trace_cursor: TraceCursor,
    /// Exit time of the previous packet; jitter never reorders.
    last_exit: SimTime,
    pub stats: LinkStats,
}

impl Link {
    pub fn new(config: LinkConfig) -> Self {
        let queue = DroptailQueue::new(config.buffer_bytes);
        Link {
            config,
            queue,
            in_service: None,
            trace_cursor: TraceCursor::default(),
            last_exit: SimTime::ZERO,
            stats: LinkStats::default(),
        }
    }

    /// When a packet of `size` bytes entering service at `now` leaves.
    pub fn service_done_at(&mut self, now: SimTime, size: u64) -> SimTime {
        match &self.config.rate {
            RateSource::Constant(r) => now + r.transmit_time(size),
            RateSource::Steps(s) => now + s.rate_at(now).transmit_time(size),
            RateSource::Trace(tr) => {
                let t = tr.seek(&mut self.trace_cursor, now);
                self.trace_cursor.index += 1;
                if self.trace_cursor.index == tr.len() {
                    self.trace_cursor.index = 0;
                    self.trace_cursor.lap += 1;
                }
                t
            }
        }
    }

    /// Applies jitter to a packet finishing service at `done`, keeping FIFO
    /// order.
    pub fn exit_time(&mut self, done: SimTime, jitter: Duration) -> SimTime {
        let exit = (done + jitter).max(self.last_exit);
        self.last_exit = exit;
        exit
    }
}
