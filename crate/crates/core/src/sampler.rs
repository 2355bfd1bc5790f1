//! Delivery-rate sampling.
//!
//! Each transmission snapshots the connection's delivery counters. When the
//! packet is acknowledged, the rate sample is the data delivered between the
//! two events divided by the longer of the send and ACK intervals.

use std::time::Duration;

use crate::time::{Rate, SimTime};

/// Counters captured when a packet leaves the sender.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SendSnapshot {
    pub delivered: u64,
    pub delivered_time: SimTime,
    pub first_sent_time: SimTime,
    pub is_app_limited: bool,
    /// Bytes in flight including this packet.
    pub tx_in_flight: u64,
    pub lost: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSample {
    pub delivery_rate: Rate,
    /// Bytes delivered over the sample interval.
    pub delivered: u64,
    pub interval: Duration,
    pub is_app_limited: bool,
    pub tx_in_flight: u64,
    /// Bytes declared lost over the sample interval.
    pub lost: u64,
    pub prior_delivered: u64,
}

#[derive(Clone, Debug, Default)]
pub struct BandwidthSampler {
    delivered: u64,
    delivered_time: SimTime,
    first_sent_time: SimTime,
    /// Non-zero while the flow is application-limited: the delivered mark
    /// after which samples are trustworthy again.
    app_limited_until: u64,
    lost: u64,
}

impl BandwidthSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn lost(&self) -> u64 {
        self.lost
    }

    pub fn is_app_limited(&self) -> bool {
        self.app_limited_until != 0
    }

    pub fn on_send(&mut self, now: SimTime, inflight_before: u64, size: u64) -> SendSnapshot {
        if inflight_before == 0 {
            self.first_sent_time = now;
            self.delivered_time = now;
        }
        SendSnapshot {
            delivered: self.delivered,
            delivered_time: self.delivered_time,
            first_sent_time: self.first_sent_time,
            is_app_limited: self.app_limited_until != 0,
            tx_in_flight: inflight_before + size,
            lost: self.lost,
        }
    }

    /// Marks the flow application-limited until the data now in flight is
    /// delivered.
    pub fn mark_app_limited(&mut self, inflight: u64) {
        self.app_limited_until = (self.delivered + inflight).max(1);
    }

    pub fn on_lost(&mut self, bytes: u64) {
        self.lost += bytes;
    }

    /// Records delivery of one packet and produces its rate sample.
    /// Samples whose interval is shorter than `min_rtt` are discarded since
    /// they overestimate the rate.
    pub fn on_ack(
        &mut self,
        now: SimTime,
        snap: &SendSnapshot,
        sent_time: SimTime,
        size: u64,
        min_rtt: Option<Duration>,
    ) -> Option<RateSample> {
        self.delivered += size;
        self.delivered_time = now;
        if self.app_limited_until != 0 && self.delivered > self.app_limited_until {
            self.app_limited_until = 0;
        }
        self.first_sent_time = sent_time;

        let send_elapsed = sent_time.saturating_since(snap.first_sent_time);
        let ack_elapsed = now.saturating_since(snap.delivered_time);
        let interval = send_elapsed.max(ack_elapsed);
        let delivered = self.delivered - snap.delivered;
        if interval.is_zero() {
            return None;
        }
        if let Some(min_rtt) = min_rtt {
            if interval < min_rtt {
                return None;
            }
        }
        Some(RateSample {
            delivery_rate: Rate::from_bytes_over(delivered, interval),
            delivered,
            interval,
            is_app_limited: snap.is_app_limited,
            tx_in_flight: snap.tx_in_flight,
            lost: self.lost - snap.lost,
            prior_delivered: snap.delivered,
        })
    }
}

/// App-limited samples may only raise a bandwidth estimate, never hold it
/// down; this decides whether a sample is eligible for a max filter.
pub fn eligible_for_max_filter(sample: &RateSample, current: Option<Rate>) -> bool {
    match current {
        Some(cur) if sample.is_app_limited => sample.delivery_rate >= cur,
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_stream_measures_rate() {
        // One 1500B packet per ms, 10ms RTT: delivery rate 1.5MB/s.
        let mut s = BandwidthSampler::new();
        let mut snaps = Vec::new();
        let mut inflight = 0;
        let mut last = None;
        for i in 0..100u64 {
            let now = SimTime::from_millis(i);
            if i >= 10 {
                let (snap, sent) = snaps[(i - 10) as usize];
                inflight -= 1500;
                last = s.on_ack(now, &snap, sent, 1500, Some(Duration::from_millis(10)));
            }
            snaps.push((s.on_send(now, inflight, 1500), now));
            inflight += 1500;
        }
        let rs = last.unwrap();
        assert!((rs.delivery_rate.bytes_per_sec() - 1.5e6).abs() < 1.0);
    }

    #[test]
    fn app_limited_flag_propagates() {
        let mut s = BandwidthSampler::new();
        s.mark_app_limited(0);
        let snap = s.on_send(SimTime::ZERO, 0, 1500);
        assert!(snap.is_app_limited);
        let rs = s
            .on_ack(SimTime::from_millis(10), &snap, SimTime::ZERO, 1500, None)
            .unwrap();
        assert!(rs.is_app_limited);
        assert!(!s.is_app_limited());
    }

    #[test]
    fn app_limited_low_sample_not_eligible() {
        let rs = RateSample {
            delivery_rate: Rate::from_mbps(5.0),
            delivered: 0,
            interval: Duration::from_millis(1),
            is_app_limited: true,
            tx_in_flight: 0,
            lost: 0,
            prior_delivered: 0,
        };
        assert!(!eligible_for_max_filter(&rs, Some(Rate::from_mbps(10.0))));
        assert!(eligible_for_max_filter(&rs, Some(Rate::from_mbps(4.0))));
        assert!(eligible_for_max_filter(&rs, None));
    }
}
