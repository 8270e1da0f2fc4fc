use std::collections::VecDeque;

use super::{Backlog, Classifier, DropReason, EnqueueOutcome, QueueBacklog, Scheduler};
use crate::error::ConfigError;
use crate::model::{Packet, SimTime};

/// Deficit round robin over classifier queues.
///
/// On each visit a backlogged queue earns its quantum; packets leave while
/// the deficit covers the head packet. An emptied queue forfeits its
/// deficit. Backs both custom queuing (equal quanta) and WFQ (weighted).
#[derive(Debug)]
pub struct Drr {
    label: &'static str,
    capacity: usize,
    classifier: Classifier,
    queues: Vec<VecDeque<Packet>>,
    bytes: Vec<f64>,
    quanta: Vec<f64>,
    deficits: Vec<f64>,
    cursor: usize,
    in_visit: bool,
    round: u64,
    last_departure_round: u64,
    backlogged: usize,
}

impl Drr {
    pub fn new(
        label: &'static str,
        capacity: usize,
        classifier: Classifier,
        quanta: Vec<f64>,
    ) -> Result<Self, ConfigError> {
        let n = classifier.queue_count();
        if quanta.len() != n {
            return Err(ConfigError::invalid(format!("{} quanta for {n} queues", quanta.len())));
        }
        if quanta.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(ConfigError::invalid("quanta must be positive"));
        }
        Ok(Self {
            label,
            capacity,
            classifier,
            queues: vec![VecDeque::new(); n],
            bytes: vec![0.0; n],
            quanta,
            deficits: vec![0.0; n],
            cursor: 0,
            in_visit: false,
            round: 0,
            last_departure_round: 0,
            backlogged: 0,
        })
    }

    pub fn quanta(&self) -> &[f64] {
        &self.quanta
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    /// Round in which the most recent packet departed. Rounds count
    /// completed passes of the service cursor over all queues.
    pub fn last_departure_round(&self) -> u64 {
        self.last_departure_round
    }

    fn advance(&mut self) {
        self.in_visit = false;
        self.cursor += 1;
        if self.cursor == self.queues.len() {
            self.cursor = 0;
            self.round += 1;
        }
    }
}

impl Scheduler for Drr {
    fn enqueue(&mut self, pkt: Packet, _now: SimTime) -> EnqueueOutcome {
        let k = self.classifier.classify(&pkt);
        if self.queues[k].len() >= self.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        self.bytes[k] += pkt.size_bytes();
        self.queues[k].push_back(pkt);
        self.backlogged += 1;
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        if self.backlogged == 0 {
            return None;
        }
        loop {
            let k = self.cursor;
            let Some(head) = self.queues[k].front() else {
                self.deficits[k] = 0.0;
                self.advance();
                continue;
            };
            if !self.in_visit {
                self.deficits[k] += self.quanta[k];
                self.in_visit = true;
            }
            let size = head.size_bytes();
            if size <= self.deficits[k] {
                let p = self.queues[k].pop_front().expect("head exists");
                self.backlogged -= 1;
                self.last_departure_round = self.round;
                if self.queues[k].is_empty() {
                    self.bytes[k] = 0.0;
                    self.deficits[k] = 0.0;
                    self.advance();
                } else {
                    self.bytes[k] -= size;
                    self.deficits[k] -= size;
                }
                return Some(p);
            }
            self.advance();
        }
    }

    fn backlog(&self) -> Backlog {
        Backlog {
            queues: self
                .queues
                .iter()
                .zip(&self.bytes)
                .map(|(q, b)| QueueBacklog { packets: q.len(), bytes: *b })
                .collect(),
        }
    }

    fn name(&self) -> &str {
        self.label
    }
}
