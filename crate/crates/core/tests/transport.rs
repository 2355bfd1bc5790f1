use std::time::Duration;

use ccsim_core::cc::FixedWindow;
use ccsim_core::transport::{Ack, Packet, Receiver, RoundSummary, TransportFlow};
use ccsim_core::{Rate, SimTime, MSS};

fn flow(cwnd: u64, rate: Rate) -> TransportFlow {
    TransportFlow::new(1, Box::new(FixedWindow::new(cwnd, rate)))
}

fn send_at(f: &mut TransportFlow, t: SimTime) -> Vec<Packet> {
    let mut out = Vec::new();
    f.maybe_send(t, &mut out);
    out
}

#[test]
fn full_window_blocks_departure() {
    let mut f = flow(4 * MSS, Rate::INFINITE);
    assert_eq!(send_at(&mut f, SimTime::ZERO).len(), 4);
    assert_eq!(f.inflight_bytes(), 4 * MSS);
    let mut out = Vec::new();
    let o = f.maybe_send(SimTime::from_millis(1), &mut out);
    assert!(out.is_empty());
    assert!(o.cwnd_limited);
}

#[test]
fn pacing_spaces_departures() {
    // 1500 B per ms.
    let mut f = flow(1_000 * MSS, Rate::from_bytes_per_sec(1.5e6));
    let mut times = Vec::new();
    let mut now = SimTime::ZERO;
    let end = SimTime::from_millis(3);
    while now < end {
        let mut out = Vec::new();
        let o = f.maybe_send(now, &mut out);
        times.extend(out.iter().map(|p| p.sent_time));
        match o.next_wakeup {
            Some(t) => now = t,
            None => break,
        }
    }
    assert_eq!(
        times,
        vec![SimTime::ZERO, SimTime::from_millis(1), SimTime::from_millis(2)]
    );
}

#[test]
fn empty_application_marks_app_limited() {
    let mut f = flow(100 * MSS, Rate::INFINITE).with_app_limit(0);
    let mut out = Vec::new();
    let o = f.maybe_send(SimTime::ZERO, &mut out);
    assert!(out.is_empty());
    assert!(o.app_limited);
    assert!(f.is_app_limited());
    f.push_app_data(MSS);
    let pkts = send_at(&mut f, SimTime::from_millis(1));
    assert!(pkts[0].app_limited_at_send);
}

#[test]
fn in_order_ack_yields_rtt_sample() {
    let mut f = flow(10 * MSS, Rate::INFINITE);
    let mut rx = Receiver::new();
    let pkts = send_at(&mut f, SimTime::ZERO);
    let mut last = None;
    for p in &pkts[..=5] {
        let ack = rx.on_packet(p);
        last = Some(f.on_ack(&ack, SimTime::from_millis(40)));
    }
    let s = last.unwrap();
    assert_eq!(s.rtt_sample, Some(Duration::from_millis(40)));
    assert_eq!(f.highest_acked(), 6);
}

#[test]
fn three_later_acks_declare_gap_head_lost() {
    let mut f = flow(20 * MSS, Rate::INFINITE);
    let mut rx = Receiver::new();
    let pkts = send_at(&mut f, SimTime::ZERO);
    let t = SimTime::from_millis(40);
    for p in &pkts[..7] {
        f.on_ack(&rx.on_packet(p), t);
    }
    // Segment 7 is dropped; 8, 9 and 10 arrive.
    let mut lost = 0;
    for p in &pkts[8..11] {
        let ack = rx.on_packet(p);
        assert_eq!(ack.cum_ack, 7);
        lost += f.on_ack(&ack, t).losses_declared;
    }
    assert_eq!(lost, 1);
    assert_eq!(f.dup_ack_count(), 3);
    assert_eq!(f.pending_retransmissions(), 1);
    let out = send_at(&mut f, t);
    let retx: Vec<_> = out.iter().filter(|p| p.is_retransmission).collect();
    assert_eq!(retx.len(), 1);
    assert_eq!(retx[0].seq, 7);
    assert_eq!(f.counters().packets_retransmitted, 1);
    f.check_conservation().unwrap();

    // The retransmission's ACK carries no RTT sample.
    let s = f.on_ack(&rx.on_packet(retx[0]), SimTime::from_millis(90));
    assert_eq!(s.rtt_sample, None);
    assert_eq!(f.highest_acked(), 11);
}

#[test]
fn rto_backs_off_and_resets() {
    let mut f = flow(4 * MSS, Rate::INFINITE);
    let mut rx = Receiver::new();
    let pkts = send_at(&mut f, SimTime::ZERO);
    f.on_ack(&rx.on_packet(&pkts[0]), SimTime::from_millis(40));
    let rto = f.rto();
    assert_eq!(rto, Duration::from_millis(200));
    let deadline = f.rto_deadline().unwrap();
    assert_eq!(deadline, SimTime::from_millis(240));
    assert!(f.on_rto_timer(SimTime::from_millis(239)).is_none());
    let ev = f.on_rto_timer(deadline).unwrap();
    assert_eq!(ev.lost_packets, 3);
    assert_eq!(f.rto(), Duration::from_millis(400));
    assert_eq!(f.inflight_bytes(), 0);
    f.check_conservation().unwrap();

    let retx = send_at(&mut f, deadline);
    assert_eq!(retx.iter().filter(|p| p.is_retransmission).count(), 3);
    assert!(retx[..3].iter().all(|p| p.is_retransmission));
    f.on_ack(&rx.on_packet(&retx[0]), deadline + Duration::from_millis(40));
    assert_eq!(f.rto(), Duration::from_millis(200));
}

#[test]
fn stale_ack_is_counted_and_ignored() {
    let mut f = flow(4 * MSS, Rate::INFINITE);
    let mut rx = Receiver::new();
    let pkts = send_at(&mut f, SimTime::ZERO);
    let ack = rx.on_packet(&pkts[0]);
    f.on_ack(&ack, SimTime::from_millis(10));
    let s = f.on_ack(&ack, SimTime::from_millis(11));
    assert!(s.stale);
    assert_eq!(f.counters().stale_acks, 1);
    let bogus = Ack { pn: 1_000, ..ack };
    assert!(f.on_ack(&bogus, SimTime::from_millis(12)).stale);
    f.check_conservation().unwrap();
}

#[test]
fn round_loss_rate_examples() {
    let r = |delivered, lost| RoundSummary {
        delivered_packets: delivered,
        lost_packets: lost,
        ..Default::default()
    };
    assert!((r(98, 2).loss_rate() - 0.02).abs() < 1e-12);
    assert_eq!(r(98, 0).loss_rate(), 0.0);
    assert!((r(8, 2).loss_rate() - 0.2).abs() < 1e-12);
    assert_eq!(r(0, 0).loss_rate(), 0.0);
}

#[test]
fn current_round_loss_rate_tracks_flow() {
    let mut f = flow(20 * MSS, Rate::INFINITE);
    let mut rx = Receiver::new();
    assert_eq!(f.loss_rate_current_round(), 0.0);
    let pkts = send_at(&mut f, SimTime::ZERO);
    // First ACK closes the initial round; the rest belong to the next one.
    f.on_ack(&rx.on_packet(&pkts[0]), SimTime::from_millis(40));
    for p in &pkts[3..11] {
        f.on_ack(&rx.on_packet(p), SimTime::from_millis(41));
    }
    // Segments 1 and 2 are lost; 8 delivered this round.
    assert!((f.loss_rate_current_round() - 0.2).abs() < 1e-12);
}

#[test]
fn lossless_run_never_retransmits() {
    let mut f = flow(30 * MSS, Rate::from_mbps(10.0));
    let mut rx = Receiver::new();
    let rtt = Duration::from_millis(20);
    let mut in_flight: std::collections::VecDeque<(SimTime, Packet)> = Default::default();
    let mut now = SimTime::ZERO;
    for _ in 0..20_000 {
        let mut out = Vec::new();
        let o = f.maybe_send(now, &mut out);
        for p in out {
            in_flight.push_back((now + rtt, p));
        }
        let next_ack = in_flight.front().map(|(t, _)| *t);
        let next = [next_ack, o.next_wakeup].into_iter().flatten().min().unwrap();
        now = next;
        while let Some(&(t, p)) = in_flight.front() {
            if t > now {
                break;
            }
            in_flight.pop_front();
            f.on_ack(&rx.on_packet(&p), t);
        }
        f.check_conservation().unwrap();
    }
    assert_eq!(f.counters().packets_retransmitted, 0);
    assert!(f.counters().goodput_bytes > 0);
}
