use std::collections::VecDeque;

use super::{Backlog, Classifier, DropReason, EnqueueOutcome, QueueBacklog, Scheduler};
use crate::model::{Packet, SimTime};

/// Strict priority over per-class FIFO queues; queue 0 is served first.
#[derive(Debug)]
pub struct PriorityQueue {
    capacity: usize,
    classifier: Classifier,
    queues: Vec<VecDeque<Packet>>,
    bytes: Vec<f64>,
}

impl PriorityQueue {
    pub fn new(capacity: usize, classifier: Classifier) -> Self {
        let n = classifier.queue_count();
        Self { capacity, classifier, queues: vec![VecDeque::new(); n], bytes: vec![0.0; n] }
    }
}

impl Scheduler for PriorityQueue {
    fn enqueue(&mut self, pkt: Packet, _now: SimTime) -> EnqueueOutcome {
        let k = self.classifier.classify(&pkt);
        if self.queues[k].len() >= self.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        self.bytes[k] += pkt.size_bytes();
        self.queues[k].push_back(pkt);
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        let k = self.queues.iter().position(|q| !q.is_empty())?;
        let p = self.queues[k].pop_front()?;
        self.bytes[k] = if self.queues[k].is_empty() { 0.0 } else { self.bytes[k] - p.size_bytes() };
        Some(p)
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
        "pq"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::testutil::*;

    #[test]
    fn voice_before_data() {
        let mut s = PriorityQueue::new(8, Classifier::three_class());
        s.enqueue(pkt(0, 0, 500), SimTime::ZERO);
        s.enqueue(pkt(1, 5, 200), SimTime::ZERO);
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 1);
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 0);
    }

    #[test]
    fn fifo_within_a_level() {
        let mut s = PriorityQueue::new(8, Classifier::three_class());
        s.enqueue(pkt(0, 5, 200), SimTime::ZERO);
        s.enqueue(pkt(1, 4, 1500), SimTime::ZERO);
        s.enqueue(pkt(2, 5, 200), SimTime::ZERO);
        let out: Vec<_> = std::iter::from_fn(|| s.dequeue(SimTime::ZERO)).collect();
        assert_eq!(ids(&out), vec![0, 2, 1]);
    }

    #[test]
    fn sole_class_is_served() {
        let mut s = PriorityQueue::new(8, Classifier::three_class());
        s.enqueue(pkt(0, 0, 500), SimTime::ZERO);
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 0);
    }

    #[test]
    fn per_class_tail_drop_only() {
        let mut s = PriorityQueue::new(1, Classifier::three_class());
        assert!(s.enqueue(pkt(0, 0, 500), SimTime::ZERO).is_accepted());
        assert!(!s.enqueue(pkt(1, 0, 500), SimTime::ZERO).is_accepted());
        assert!(s.enqueue(pkt(2, 5, 200), SimTime::ZERO).is_accepted());
        assert_eq!(s.backlog().queues.iter().map(|q| q.packets).collect::<Vec<_>>(), vec![1, 0, 1]);
    }
}
