use std::collections::VecDeque;
use std::time::Duration;

use proptest::prelude::*;

use ccsim_core::cc::bbr2plus::{compensated_bdp, DualMode};
use ccsim_core::cc::cubic::{cubic_k, cubic_window};
use ccsim_core::cc::{Bbr2PlusParams, FixedWindow, ProbeBwMode};
use ccsim_core::filter::WindowedFilter;
use ccsim_core::rtt::RttEstimator;
use ccsim_core::transport::{Packet, Receiver, TransportFlow};
use ccsim_core::{Rate, SimTime, MSS};

/// Samples as (value, stamp increment).
fn sample_seq() -> impl Strategy<Value = Vec<(u32, u8)>> {
    prop::collection::vec((0u32..1000, 0u8..3), 1..120)
}

fn brute_force(samples: &[(u32, u64)], now: u64, window: u64, max: bool) -> Option<u32> {
    let live = samples.iter().filter(|(_, s)| now - s < window).map(|(v, _)| *v);
    if max {
        live.max()
    } else {
        live.min()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn filter_matches_brute_force(seq in sample_seq(), window in 1u64..12, max in any::<bool>()) {
        let mut f = if max { WindowedFilter::max(window) } else { WindowedFilter::min(window) };
        let mut seen = Vec::new();
        let mut now = 0u64;
        for (v, dt) in seq {
            now += dt as u64;
            seen.push((v, now));
            let got = f.update(v, now);
            let want = brute_force(&seen, now, window, max).unwrap();
            prop_assert_eq!(got, want);
            prop_assert_eq!(f.current(), Some(want));
        }
    }
}

proptest! {
    #[test]
    fn round_minimum_survives_rollover(rounds in prop::collection::vec(prop::collection::vec(1u64..500, 1..20), 1..20)) {
        let mut est = RttEstimator::new();
        let mut t = 0u64;
        for samples in &rounds {
            est.on_round_start();
            for &ms in samples {
                t += 1;
                est.on_sample(Duration::from_millis(ms), SimTime::from_millis(t));
            }
            let want = Duration::from_millis(*samples.iter().min().unwrap());
            prop_assert_eq!(est.minrtt_curr_round(), Some(want));
        }
        est.on_round_start();
        let last = rounds.last().unwrap();
        prop_assert_eq!(est.minrtt_prev_round(), Some(Duration::from_millis(*last.iter().min().unwrap())));
    }

    #[test]
    fn transport_conserves_bytes(drops in prop::collection::vec(any::<bool>(), 200..400), cwnd_pkts in 4u64..40) {
        let mut f = TransportFlow::new(0, Box::new(FixedWindow::new(cwnd_pkts * MSS, Rate::from_mbps(20.0))));
        let mut rx = Receiver::new();
        let rtt = Duration::from_millis(30);
        let mut wire: VecDeque<(SimTime, Packet)> = VecDeque::new();
        let mut now = SimTime::ZERO;
        let mut sent = 0usize;
        let mut out = Vec::new();
        for _ in 0..5_000 {
            out.clear();
            let o = f.maybe_send(now, &mut out);
            for p in out.drain(..) {
                let drop = drops[sent % drops.len()] && sent % 7 == 0;
                sent += 1;
                if !drop {
                    wire.push_back((now + rtt, p));
                }
            }
            let next = [wire.front().map(|w| w.0), o.next_wakeup, f.rto_deadline()]
                .into_iter()
                .flatten()
                .min();
            let Some(next) = next else { break };
            now = next.max(now);
            while let Some(&(t, p)) = wire.front() {
                if t > now {
                    break;
                }
                wire.pop_front();
                f.on_ack(&rx.on_packet(&p), t);
                prop_assert!(f.check_conservation().is_ok());
            }
            f.on_rto_timer(now);
            prop_assert!(f.check_conservation().is_ok());
        }
    }

    #[test]
    fn cubic_window_is_monotone(w_max in 2.0f64..10_000.0, t1 in 0.0f64..60.0, dt in 0.0f64..10.0) {
        let k = cubic_k(w_max, 0.4, 0.7);
        prop_assert!(cubic_window(w_max, k, 0.4, t1 + dt) >= cubic_window(w_max, k, 0.4, t1));
    }

    #[test]
    fn cubic_window_brackets_wmax(w_max in 10.0f64..10_000.0, delta in 0.01f64..5.0) {
        let k = cubic_k(w_max, 0.4, 0.7);
        prop_assume!(k - delta > 0.0);
        prop_assert!(cubic_window(w_max, k, 0.4, k - delta) < w_max);
        prop_assert!(cubic_window(w_max, k, 0.4, k + delta) > w_max);
    }

    #[test]
    fn compensation_monotone_in_jitter(
        bw in 1e5f64..1e8,
        rtprop_ms in 1u64..300,
        j1 in 0u64..500,
        dj in 0u64..500,
    ) {
        let bw = Rate::from_bytes_per_sec(bw);
        let rtprop = Duration::from_millis(rtprop_ms);
        let a = compensated_bdp(bw, rtprop, Duration::from_millis(j1), 0.5);
        let b = compensated_bdp(bw, rtprop, Duration::from_millis(j1 + dj), 0.5);
        prop_assert!(b >= a);
        if Duration::from_millis(j1).as_secs_f64() <= rtprop.as_secs_f64() * 0.5 {
            prop_assert_eq!(a, bw.bytes_in(rtprop));
        }
    }

    #[test]
    fn dual_mode_needs_consecutive_filling_cruises(minima in prop::collection::vec(35u64..60, 1..60)) {
        let p = Bbr2PlusParams::default();
        let rtprop = Duration::from_millis(40);
        let mut d = DualMode::default();
        let mut run = 0u32;
        for m in minima {
            let filling = m as f64 > 40.0 * p.lambda1;
            let switched = d.on_cruise_end(Duration::from_millis(m), rtprop, &p);
            if d.mode == ProbeBwMode::V2 || switched.is_some() {
                // Only evaluate the first switch.
                prop_assert!(filling);
                prop_assert_eq!(run + 1, p.eta1);
                break;
            }
            run = if filling { run + 1 } else { 0 };
            prop_assert!(run < p.eta1);
        }
    }
}
