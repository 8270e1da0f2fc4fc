use std::collections::VecDeque;

use super::{Backlog, DropReason, EnqueueOutcome, QueueBacklog, Scheduler};
use crate::model::{Packet, SimTime};

/// Single tail-drop queue.
#[derive(Debug)]
pub struct Fifo {
    capacity: usize,
    queue: VecDeque<Packet>,
    bytes: f64,
}

impl Fifo {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, queue: VecDeque::new(), bytes: 0.0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

impl Scheduler for Fifo {
    fn enqueue(&mut self, pkt: Packet, _now: SimTime) -> EnqueueOutcome {
        if self.queue.len() >= self.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        self.bytes += pkt.size_bytes();
        self.queue.push_back(pkt);
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        let p = self.queue.pop_front()?;
        self.bytes = if self.queue.is_empty() { 0.0 } else { self.bytes - p.size_bytes() };
        Some(p)
    }

    fn backlog(&self) -> Backlog {
        Backlog { queues: vec![QueueBacklog { packets: self.queue.len(), bytes: self.bytes }] }
    }

    fn name(&self) -> &str {
        "fifo"
    }
}
