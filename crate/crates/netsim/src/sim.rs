//! Dumbbell simulation: N senders share one bottleneck, each with its own
//! propagation delay to its receiver.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ccsim_core::cc::{CcTelemetry, CcaConfig, CcaKind, ProbeBwMode};
use ccsim_core::transport::{FlowCounters, Packet, Receiver, TransportFlow};
use ccsim_core::{Rate, SimTime, MSS};

use crate::event::{EventKind, EventQueue};
use crate::link::{Link, LinkConfig, LinkStats};
use crate::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub cca: CcaConfig,
    pub start: Duration,
    /// Round-trip propagation delay, split evenly between the data and ACK
    /// directions.
    pub base_rtt: Duration,
    /// Total bytes the application offers; `None` is a bulk transfer.
    pub app_limit_bytes: Option<u64>,
    /// The application produces one MSS at this rate instead of holding a
    /// backlog.
    pub app_rate: Option<Rate>,
}

impl FlowConfig {
    pub fn bulk(cca: CcaConfig, base_rtt: Duration) -> Self {
        FlowConfig {
            cca,
            start: Duration::ZERO,
            base_rtt,
            app_limit_bytes: None,
            app_rate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub duration: Duration,
    pub seed: u64,
    pub sample_interval: Duration,
    pub link: LinkConfig,
    pub flows: Vec<FlowConfig>,
}

impl SimConfig {
    pub fn new(duration: Duration, seed: u64, link: LinkConfig, flows: Vec<FlowConfig>) -> Self {
        SimConfig {
            duration,
            seed,
            sample_interval: Duration::from_millis(100),
            link,
            flows,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.link.validate()?;
        if self.flows.is_empty() {
            return Err(SimError::Config("scenario has no flows".into()));
        }
        if self.sample_interval.is_zero() {
            return Err(SimError::Config("sample interval must be positive".into()));
        }
        for (i, f) in self.flows.iter().enumerate() {
            f.cca.validate().map_err(|e| SimError::Cca { flow: i, source: e })?;
            if f.base_rtt.is_zero() {
                return Err(SimError::Config(format!("flow {i}: base RTT must be positive")));
            }
            if let Some(r) = f.app_rate {
                if !(r.bytes_per_sec() > 0.0) || !r.is_finite() {
                    return Err(SimError::Config(format!(
                        "flow {i}: application rate must be positive and finite"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One telemetry row for one flow at one sample tick.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub time_s: f64,
    pub flow_id: u32,
    pub cca: CcaKind,
    pub state: &'static str,
    pub throughput_mbps: f64,
    pub srtt_ms: Option<f64>,
    pub rtprop_est_ms: Option<f64>,
    pub btlbw_est_mbps: Option<f64>,
    pub pacing_rate_mbps: f64,
    pub pacing_gain: f64,
    pub cwnd_bytes: u64,
    pub inflight_bytes: u64,
    pub retx_cum: u64,
    pub queue_len_bytes: u64,
    pub probe_bw_mode: Option<ProbeBwMode>,
    pub mode_switches: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BacklogSample {
    pub time_s: f64,
    pub occupancy_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSummary {
    pub flow_id: u32,
    pub cca: CcaKind,
    pub active_secs: f64,
    /// Unique bytes at the receiver.
    pub delivered_bytes: u64,
    pub mean_throughput_mbps: f64,
    pub retransmission_rate: f64,
    pub mean_sojourn_ms: Option<f64>,
    pub p95_sojourn_ms: Option<f64>,
    pub mean_rtt_ms: Option<f64>,
    pub mean_inflight_bytes: f64,
    pub counters: FlowCounters,
    pub final_telemetry: CcTelemetry,
    pub conservation_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    /// Rows ordered by time, then flow.
    pub samples: Vec<FlowSample>,
    pub backlog: Vec<BacklogSample>,
    pub flows: Vec<FlowSummary>,
    pub link: LinkStats,
    pub events_processed: u64,
}

impl SimResult {
    /// Mean of the per-tick throughput of `flow_id` over ticks in
    /// `(from_s, to_s]`.
    pub fn mean_throughput_between(&self, flow_id: u32, from_s: f64, to_s: f64) -> Option<f64> {
        let (sum, n) = self
            .samples
            .iter()
            .filter(|s| s.flow_id == flow_id && s.time_s > from_s && s.time_s <= to_s)
            .fold((0.0, 0usize), |(a, n), s| (a + s.throughput_mbps, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn flow_samples(&self, flow_id: u32) -> impl Iterator<Item = &FlowSample> {
        self.samples.iter().filter(move |s| s.flow_id == flow_id)
    }

    pub fn conservation_ok(&self) -> bool {
        self.link.conserved() && self.flows.iter().all(|f| f.conservation_error.is_none())
    }
}

/// Independent RNG stream for one stochastic component.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(stream))
}

const LOSS_STREAM: u64 = 1;
const JITTER_STREAM: u64 = 2;
const CC_STREAM_BASE: u64 = 100;

struct FlowState {
    tx: TransportFlow,
    rx: Receiver,
    kind: CcaKind,
    start: SimTime,
    app_interval: Option<Duration>,
    fwd_delay: Duration,
    ack_delay: Duration,
    started: bool,
    wake_at: Option<SimTime>,
    rto_at: Option<SimTime>,
    rx_bytes_at_last_tick: u64,
    sojourns_ms: Vec<f32>,
    rtt_sum_s: f64,
    rtt_count: u64,
    inflight_sum: f64,
    ticks: u64,
    conservation_error: Option<String>,
}

struct Sim {
    now: SimTime,
    end: SimTime,
    interval: Duration,
    queue: EventQueue,
    link: Link,
    flows: Vec<FlowState>,
    loss_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    send_buf: Vec<Packet>,
    samples: Vec<FlowSample>,
    backlog: Vec<BacklogSample>,
    events: u64,
}

/// Runs a scenario to completion. Identical configs give identical results.
pub fn run(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let jitter = match config.link.jitter {
        Some(j) if !j.mean.is_zero() || !j.sd.is_zero() => Some(
            Normal::new(j.mean.as_secs_f64(), j.sd.as_secs_f64())
                .map_err(|e| SimError::Config(format!("jitter: {e}")))?,
        ),
        _ => None,
    };
    let flows = config
        .flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cc = f.cca.build(derive_seed(config.seed, CC_STREAM_BASE + i as u64));
            let mut tx = TransportFlow::new(i as u32, cc);
            match (f.app_limit_bytes, f.app_rate) {
                (Some(limit), _) => tx = tx.with_app_limit(limit),
                (None, Some(_)) => tx = tx.with_app_limit(0),
                (None, None) => {}
            }
            let fwd_delay = f.base_rtt / 2;
            FlowState {
                tx,
                rx: Receiver::new(),
                kind: f.cca.kind(),
                start: SimTime::ZERO + f.start,
                app_interval: f.app_rate.map(|r| r.transmit_time(MSS)),
                fwd_delay,
                ack_delay: f.base_rtt - fwd_delay,
                started: false,
                wake_at: None,
                rto_at: None,
                rx_bytes_at_last_tick: 0,
                sojourns_ms: Vec::new(),
                rtt_sum_s: 0.0,
                rtt_count: 0,
                inflight_sum: 0.0,
                ticks: 0,
                conservation_error: None,
            }
        })
        .collect();
    let mut sim = Sim {
        now: SimTime::ZERO,
        end: SimTime::ZERO + config.duration,
        interval: config.sample_interval,
        queue: EventQueue::new(),
        link: Link::new(config.link.clone()),
        flows,
        loss_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, LOSS_STREAM)),
        jitter_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, JITTER_STREAM)),
        jitter,
        send_buf: Vec::new(),
        samples: Vec::new(),
        backlog: Vec::new(),
        events: 0,
    };
    sim.run();
    Ok(sim.finish())
}

impl Sim {
    fn run(&mut self) {
        for i in 0..self.flows.len() {
            let start = self.flows[i].start;
            if start <= self.end {
                self.queue.push(start, EventKind::FlowStart(i as u32));
            }
        }
        let first_tick = SimTime::ZERO + self.interval;
        if first_tick <= self.end {
            self.queue.push(first_tick, EventKind::SampleTick);
        }
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.end {
                break;
            }
            self.now = ev.time;
            self.events += 1;
            match ev.kind {
                EventKind::FlowStart(i) => {
                    self.flows[i as usize].started = true;
                    if self.flows[i as usize].app_interval.is_some() {
                        self.queue.push(self.now, EventKind::AppData(i));
                    }
                    self.try_send(i as usize);
                }
                EventKind::AppData(i) => {
                    let f = &mut self.flows[i as usize];
                    f.tx.push_app_data(MSS);
                    if let Some(dt) = f.app_interval {
                        self.queue.push(self.now + dt, EventKind::AppData(i));
                    }
                    self.try_send(i as usize);
                }
                EventKind::SenderWake(i) => {
                    let f = &mut self.flows[i as usize];
                    if f.wake_at == Some(self.now) {
                        f.wake_at = None;
                        self.try_send(i as usize);
                    }
                }
                EventKind::RtoTimer(i) => self.on_rto_timer(i as usize),
                EventKind::LinkDeparture => self.on_departure(),
                EventKind::PacketArrival(pkt) => {
                    let f = &mut self.flows[pkt.flow_id as usize];
                    let ack = f.rx.on_packet(&pkt);
                    let at = self.now + f.ack_delay;
                    self.queue.push(at, EventKind::AckArrival(ack));
                }
                EventKind::AckArrival(ack) => {
                    let i = ack.flow_id as usize;
                    let f = &mut self.flows[i];
                    let s = f.tx.on_ack(&ack, self.now);
                    if let Some(rtt) = s.rtt_sample {
                        f.rtt_sum_s += rtt.as_secs_f64();
                        f.rtt_count += 1;
                    }
                    self.try_send(i);
                }
                EventKind::SampleTick => self.on_tick(),
            }
        }
    }

    fn try_send(&mut self, i: usize) {
        let mut out = std::mem::take(&mut self.send_buf);
        out.clear();
        let outcome = self.flows[i].tx.maybe_send(self.now, &mut out);
        for pkt in out.drain(..) {
            self.enqueue(pkt);
        }
        self.send_buf = out;
        if let Some(w) = outcome.next_wakeup {
            let f = &mut self.flows[i];
            if f.wake_at.is_none_or(|x| w < x) {
                f.wake_at = Some(w);
                self.queue.push(w, EventKind::SenderWake(i as u32));
            }
        }
        self.arm_rto(i);
    }

    fn arm_rto(&mut self, i: usize) {
        let f = &mut self.flows[i];
        if let Some(d) = f.tx.rto_deadline() {
            if f.rto_at.is_none_or(|x| d < x) {
                f.rto_at = Some(d);
                self.queue.push(d, EventKind::RtoTimer(i as u32));
            }
        }
    }

    fn on_rto_timer(&mut self, i: usize) {
        let f = &mut self.flows[i];
        if f.rto_at != Some(self.now) {
            return;
        }
        f.rto_at = None;
        f.tx.on_rto_timer(self.now);
        self.try_send(i);
    }

    fn enqueue(&mut self, pkt: Packet) {
        let stats = &mut self.link.stats;
        stats.injected += 1;
        let p = self.link.config.loss_prob;
        if p > 0.0 && self.loss_rng.random::<f64>() < p {
            stats.dropped_random += 1;
            return;
        }
        if !self.link.queue.offer(pkt, self.now) {
            self.link.stats.dropped_droptail += 1;
            return;
        }
        let occ = self.link.queue.occupancy_bytes();
        self.link.stats.max_occupancy_bytes = self.link.stats.max_occupancy_bytes.max(occ);
        if self.link.in_service.is_none() {
            self.start_service();
        }
    }

    fn start_service(&mut self) {
        if let Some(q) = self.link.queue.pop() {
            let done = self.link.service_done_at(self.now, q.pkt.size_bytes as u64);
            self.link.in_service = Some(q);
            self.queue.push(done, EventKind::LinkDeparture);
        }
    }

    fn on_departure(&mut self) {
        let Some(q) = self.link.in_service.take() else {
            return;
        };
        self.link.stats.delivered += 1;
        let f = &mut self.flows[q.pkt.flow_id as usize];
        let sojourn = self.now.saturating_since(q.enqueued_at);
        f.sojourns_ms.push((sojourn.as_secs_f64() * 1e3) as f32);
        let jitter = match &self.jitter {
            Some(n) => Duration::from_secs_f64(n.sample(&mut self.jitter_rng).max(0.0)),
            None => Duration::ZERO,
        };
        let exit = self.link.exit_time(self.now, jitter);
        let arrival = exit + f.fwd_delay;
        self.queue.push(arrival, EventKind::PacketArrival(q.pkt));
        self.start_service();
    }

    fn on_tick(&mut self) {
        let t = self.now.as_secs_f64();
        let occupancy = self.link.queue.occupancy_bytes();
        self.backlog.push(BacklogSample {
            time_s: t,
            occupancy_bytes: occupancy,
        });
        for f in self.flows.iter_mut().filter(|f| f.started) {
            let rx_bytes = f.rx.unique_bytes();
            let tput = Rate::from_bytes_over(rx_bytes - f.rx_bytes_at_last_tick, self.interval);
            f.rx_bytes_at_last_tick = rx_bytes;
            let tel = f.tx.cc().telemetry();
            let inflight = f.tx.inflight_bytes();
            f.inflight_sum += inflight as f64;
            f.ticks += 1;
            if f.conservation_error.is_none() {
                f.conservation_error = f.tx.check_conservation().err();
            }
            self.samples.push(FlowSample {
                time_s: t,
                flow_id: f.tx.flow_id(),
                cca: f.kind,
                state: tel.state,
                throughput_mbps: tput.mbps(),
                srtt_ms: f.tx.rtt().srtt().map(ms),
                rtprop_est_ms: tel.rtprop.map(ms),
                btlbw_est_mbps: tel.btlbw.map(Rate::mbps),
                pacing_rate_mbps: f.tx.pacing_rate().mbps(),
                pacing_gain: tel.pacing_gain,
                cwnd_bytes: f.tx.cwnd_bytes(),
                inflight_bytes: inflight,
                retx_cum: f.tx.counters().packets_retransmitted,
                queue_len_bytes: occupancy,
                probe_bw_mode: tel.probe_bw_mode,
                mode_switches: tel.mode_switches,
            });
        }
        let next = self.now + self.interval;
        if next <= self.end {
            self.queue.push(next, EventKind::SampleTick);
        }
    }

    fn finish(mut self) -> SimResult {
        self.link.stats.queued_at_end = self.link.queue.len() as u64;
        self.link.stats.in_service_at_end = self.link.in_service.is_some() as u64;
        let end = self.end;
        let flows = self
            .flows
            .into_iter()
            .map(|mut f| {
                let active = end.saturating_since(f.start).as_secs_f64();
                let delivered = f.rx.unique_bytes();
                let c = f.tx.counters().clone();
                let conservation_error = f
                    .conservation_error
                    .or_else(|| f.tx.check_conservation().err());
                let (mean_sojourn_ms, p95_sojourn_ms) = sojourn_stats(&mut f.sojourns_ms);
                FlowSummary {
                    flow_id: f.tx.flow_id(),
                    cca: f.kind,
                    active_secs: active,
                    delivered_bytes: delivered,
                    mean_throughput_mbps: if active > 0.0 {
                        delivered as f64 * 8.0 / active / 1e6
                    } else {
                        0.0
                    },
                    retransmission_rate: if c.packets_sent > 0 {
                        c.packets_retransmitted as f64 / c.packets_sent as f64
                    } else {
                        0.0
                    },
                    mean_sojourn_ms,
                    p95_sojourn_ms,
                    mean_rtt_ms: (f.rtt_count > 0)
                        .then(|| f.rtt_sum_s / f.rtt_count as f64 * 1e3),
                    mean_inflight_bytes: if f.ticks > 0 {
                        f.inflight_sum / f.ticks as f64
                    } else {
                        0.0
                    },
                    counters: c,
                    final_telemetry: f.tx.cc().telemetry(),
                    conservation_error,
                }
            })
            .collect();
        SimResult {
            samples: self.samples,
            backlog: self.backlog,
            flows,
            link: self.link.stats,
            events_processed: self.events,
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Mean and nearest-rank 95th percentile.
fn sojourn_stats(v: &mut [f32]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, p95, _) = v.select_nth_unstable_by(rank, f32::total_cmp);
    (Some(mean), Some(*p95 as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let mut v: Vec<f32> = (1..=100).map(|x| x as f32).collect();
        let (mean, p95) = sojourn_stats(&mut v);
        assert_eq!(mean, Some(50.5));
        assert_eq!(p95, Some(95.0));
        assert_eq!(sojourn_stats(&mut []), (None, None));
    }

    #[test]
    fn seed_streams_differ() {
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
    }
}
