//! Deterministic event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ccsim_core::transport::{Ack, FlowId, Packet};
use ccsim_core::SimTime;

#[derive(Clone, Debug)]
pub enum EventKind {
    FlowStart(FlowId),
    /// Pacing or application wakeup.
    SenderWake(FlowId),
    RtoTimer(FlowId),
    /// Constant-rate application produced one segment.
    AppData(FlowId),
    /// Head-of-line packet finished service at the bottleneck.
    LinkDeparture,
    PacketArrival(Packet),
    AckArrival(Ack),
    SampleTick,
}

#[derive(Clone, Debug)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so the max-heap pops the earliest `(time, seq)` first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Events pop in `(time, insertion order)` order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
