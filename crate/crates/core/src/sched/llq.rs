use std::collections::VecDeque;

use super::{Backlog, DropReason, EnqueueOutcome, QueueBacklog, Scheduler};
use crate::error::ConfigError;
use crate::model::{Packet, SimTime};

/// Low latency queue: an unpoliced FIFO with absolute priority over an
/// inner discipline. The inner scheduler is only consulted when it is empty.
#[derive(Debug)]
pub struct Llq<S> {
    selects: [bool; 8],
    capacity: usize,
    llq: VecDeque<Packet>,
    bytes: f64,
    inner: S,
    name: String,
}

impl<S: Scheduler> Llq<S> {
    pub fn new(inner: S, precedences: &[u8], capacity: usize) -> Result<Self, ConfigError> {
        let mut selects = [false; 8];
        for &p in precedences {
            if p > 7 {
                return Err(ConfigError::invalid(format!("precedence {p} exceeds 3 bits")));
            }
            selects[p as usize] = true;
        }
        let name = format!("{}_llq", inner.name());
        Ok(Self { selects, capacity, llq: VecDeque::new(), bytes: 0.0, inner, name })
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn selects(&self, pkt: &Packet) -> bool {
        self.selects[pkt.precedence() as usize]
    }

    pub fn llq_len(&self) -> usize {
        self.llq.len()
    }
}

impl<S: Scheduler> Scheduler for Llq<S> {
    fn enqueue(&mut self, pkt: Packet, now: SimTime) -> EnqueueOutcome {
        if !self.selects(&pkt) {
            return self.inner.enqueue(pkt, now);
        }
        if self.llq.len() >= self.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        self.bytes += pkt.size_bytes();
        self.llq.push_back(pkt);
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        match self.llq.pop_front() {
            Some(p) => {
                self.bytes = if self.llq.is_empty() { 0.0 } else { self.bytes - p.size_bytes() };
                Some(p)
            }
            None => self.inner.dequeue(now),
        }
    }

    /// The low latency queue is reported first, followed by the inner queues.
    fn backlog(&self) -> Backlog {
        let mut b = self.inner.backlog();
        b.queues.insert(0, QueueBacklog { packets: self.llq.len(), bytes: self.bytes });
        b
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::testutil::*;
    use crate::sched::{cq, wfq, QueueConfig};

    fn cfg() -> QueueConfig {
        QueueConfig::default()
    }

    #[test]
    fn voice_overtakes_queued_video() {
        let mut s = Llq::new(wfq(&cfg()).unwrap(), &[5, 6, 7], 64).unwrap();
        for i in 0..10 {
            s.enqueue(pkt(i, 4, 1500), SimTime::ZERO);
        }
        s.enqueue(pkt(99, 5, 200), SimTime::ZERO);
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 99);
        assert_eq!(s.name(), "wfq_llq");
    }

    #[test]
    fn empty_llq_is_transparent() {
        let mut plain = cq(&cfg()).unwrap();
        let mut wrapped = Llq::new(cq(&cfg()).unwrap(), &[5, 6, 7], 64).unwrap();
        for i in 0..30 {
            let prec = [4, 0, 4, 0, 0][i as usize % 5];
            let size = 200 + (i * 97) % 1300;
            plain.enqueue(pkt(i, prec, size), SimTime::ZERO);
            wrapped.enqueue(pkt(i, prec, size), SimTime::ZERO);
        }
        let a: Vec<_> = std::iter::from_fn(|| plain.dequeue(SimTime::ZERO)).collect();
        let b: Vec<_> = std::iter::from_fn(|| wrapped.dequeue(SimTime::ZERO)).collect();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn mid_round_arrival_is_next() {
        let mut s = Llq::new(cq(&cfg()).unwrap(), &[5, 6, 7], 64).unwrap();
        for i in 0..6 {
            s.enqueue(pkt(i, 4, 500), SimTime::ZERO);
            s.enqueue(pkt(10 + i, 0, 500), SimTime::ZERO);
        }
        // inner round is part-way through the video class
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 0);
        s.enqueue(pkt(99, 5, 200), SimTime::ZERO);
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 99);
        // and the inner round resumes where it left off
        assert_eq!(s.dequeue(SimTime::ZERO).unwrap().id.0, 1);
    }

    #[test]
    fn backlog_lists_llq_first() {
        let mut s = Llq::new(cq(&cfg()).unwrap(), &[5], 64).unwrap();
        s.enqueue(pkt(0, 5, 200), SimTime::ZERO);
        s.enqueue(pkt(1, 0, 500), SimTime::ZERO);
        let b = s.backlog();
        assert_eq!(b.queues.len(), 4);
        assert_eq!(b.queues[0].packets, 1);
        assert_eq!(b.packets(), 2);
    }
}
