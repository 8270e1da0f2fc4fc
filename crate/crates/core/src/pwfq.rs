//! Prioritized WFQ with round robin.
//!
//! Packets are classified into one of `n` top-level queues (weights
//! `w_1 >= w_2 >= ... >= w_n`), each split into priority sub-queues with
//! priorities `p_i1..p_im`. FIFO order holds inside a sub-queue.
//!
//! Service is a nested deficit round robin. The outer rotation always starts
//! at top-level queue 0 and gives queue `i` a time slice
//! `t_i = base_slice * w_i / sum(w)`, converted to a byte budget at the
//! egress link rate. When a top-level visit begins, each backlogged
//! sub-queue receives the share of that budget proportional to its priority
//! among the backlogged siblings, and drains while its deficit covers the
//! head packet. With everything backlogged the long-run byte share of
//! sub-queue `(i, j)` is
//!
//! ```text
//! BW_i  = w_i / sum_k w_k
//! BW_ij = BW_i * p_ij / sum_k p_ik
//! ```

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{Packet, SimTime};
use crate::sched::{Backlog, DropReason, EnqueueOutcome, QueueBacklog, Scheduler, DEFAULT_CAPACITY};

pub const DEFAULT_BASE_SLICE_S: f64 = 0.020;

/// One classifier row: these precedences go to sub-queue `queue = [i, j]`
/// (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PwfqRule {
    pub precedences: Vec<u8>,
    pub queue: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwfqConfig {
    /// Top-level weights, highest first.
    pub weights: Vec<f64>,
    /// `priorities[i]` holds the sub-queue priorities of top-level queue `i`.
    pub priorities: Vec<Vec<f64>>,
    #[serde(default = "default_base_slice")]
    pub base_slice_s: f64,
    pub classifier: Vec<PwfqRule>,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
}

fn default_base_slice() -> f64 {
    DEFAULT_BASE_SLICE_S
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

impl PwfqConfig {
    /// Checks the configuration and returns the precedence lookup table.
    pub fn validate(&self) -> Result<[(usize, usize); 8], ConfigError> {
        if self.weights.is_empty() {
            return Err(ConfigError::invalid("pwfq needs at least one top-level queue"));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(ConfigError::invalid(format!("pwfq weight {w} must be positive")));
        }
        if self.weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(ConfigError::invalid("pwfq weights must be sorted from highest to lowest"));
        }
        if self.priorities.len() != self.weights.len() {
            return Err(ConfigError::invalid(format!(
                "{} priority lists for {} top-level queues",
                self.priorities.len(),
                self.weights.len()
            )));
        }
        for (i, ps) in self.priorities.iter().enumerate() {
            if ps.is_empty() {
                return Err(ConfigError::invalid(format!("top-level queue {i} has no sub-queues")));
            }
            if let Some(p) = ps.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(ConfigError::invalid(format!("pwfq priority {p} must be positive")));
            }
        }
        if !(self.base_slice_s.is_finite() && self.base_slice_s > 0.0) {
            return Err(ConfigError::invalid("pwfq base slice must be positive"));
        }
        if self.capacity == 0 {
            return Err(ConfigError::invalid("queue capacity must be positive"));
        }
        let mut table = [(usize::MAX, usize::MAX); 8];
        for rule in &self.classifier {
            let [i, j] = rule.queue;
            if i >= self.weights.len() || j >= self.priorities[i].len() {
                return Err(ConfigError::invalid(format!("pwfq rule targets missing sub-queue ({i}, {j})")));
            }
            for &p in &rule.precedences {
                if p > 7 {
                    return Err(ConfigError::invalid(format!("precedence {p} exceeds 3 bits")));
                }
                if table[p as usize].0 != usize::MAX {
                    return Err(ConfigError::invalid(format!("precedence {p} mapped twice")));
                }
                table[p as usize] = (i, j);
            }
        }
        if let Some(p) = table.iter().position(|e| e.0 == usize::MAX) {
            return Err(ConfigError::invalid(format!("precedence {p} has no pwfq sub-queue")));
        }
        Ok(table)
    }

    pub fn top_count(&self) -> usize {
        self.weights.len()
    }

    /// Time slice `t_i` of top-level queue `i`.
    pub fn time_slice(&self, i: usize) -> SimTime {
        SimTime::from_secs(self.base_slice_s * top_level_share(self, i)).expect("positive config")
    }
}

/// `w_i / sum(w)`.
pub fn top_level_share(cfg: &PwfqConfig, i: usize) -> f64 {
    let total: f64 = cfg.weights.iter().sum();
    cfg.weights[i] / total
}

/// `p_ij / sum_k(p_ik)` scaled by the share of top-level queue `i`.
pub fn sub_queue_share(cfg: &PwfqConfig, i: usize, j: usize) -> f64 {
    let total: f64 = cfg.priorities[i].iter().sum();
    cfg.priorities[i][j] / total * top_level_share(cfg, i)
}

#[derive(Debug, Default)]
struct SubQueue {
    packets: VecDeque<Packet>,
    bytes: f64,
    deficit: f64,
}

#[derive(Debug)]
pub struct PwfqRr {
    cfg: PwfqConfig,
    table: [(usize, usize); 8],
    top_budget: Vec<f64>,
    subs: Vec<Vec<SubQueue>>,
    top_backlog: Vec<usize>,
    total: usize,
    outer: usize,
    inner: usize,
    top_active: bool,
    sub_active: bool,
    eligible: Vec<bool>,
    eligible_priority: f64,
    rotation: u64,
    last_departure_rotation: u64,
}

/// Builds the scheduler for an egress link running at `link_rate_bps`.
pub fn pwfq_rr(cfg: &PwfqConfig, link_rate_bps: u64) -> Result<PwfqRr, ConfigError> {
    PwfqRr::new(cfg.clone(), link_rate_bps)
}

impl PwfqRr {
    pub fn new(cfg: PwfqConfig, link_rate_bps: u64) -> Result<Self, ConfigError> {
        let table = cfg.validate()?;
        if link_rate_bps == 0 {
            return Err(ConfigError::invalid("link rate must be positive"));
        }
        let top_budget = (0..cfg.top_count())
            .map(|i| cfg.time_slice(i).secs() * link_rate_bps as f64 / 8.0)
            .collect();
        let subs = cfg.priorities.iter().map(|ps| ps.iter().map(|_| SubQueue::default()).collect()).collect();
        let n = cfg.top_count();
        Ok(Self {
            table,
            top_budget,
            subs,
            top_backlog: vec![0; n],
            total: 0,
            outer: 0,
            inner: 0,
            top_active: false,
            sub_active: false,
            eligible: Vec::new(),
            eligible_priority: 0.0,
            rotation: 0,
            last_departure_rotation: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &PwfqConfig {
        &self.cfg
    }

    /// Byte budget of one visit to top-level queue `i`.
    pub fn top_budget(&self, i: usize) -> f64 {
        self.top_budget[i]
    }

    /// Sub-queue `(i, j)` a packet of this precedence is classified into.
    pub fn sub_queue_for(&self, precedence: u8) -> (usize, usize) {
        self.table[(precedence & 7) as usize]
    }

    pub fn sub_backlog(&self, i: usize, j: usize) -> QueueBacklog {
        let s = &self.subs[i][j];
        QueueBacklog { packets: s.packets.len(), bytes: s.bytes }
    }

    /// Outer rotations completed so far.
    pub fn rotation(&self) -> u64 {
        self.rotation
    }

    /// Outer rotation during which the most recent packet departed.
    pub fn last_departure_rotation(&self) -> u64 {
        self.last_departure_rotation
    }

    fn next_top(&mut self) {
        self.top_active = false;
        self.sub_active = false;
        self.outer += 1;
        if self.outer == self.subs.len() {
            self.outer = 0;
            self.rotation += 1;
        }
    }

    fn next_sub(&mut self) {
        self.sub_active = false;
        self.inner += 1;
    }

    fn begin_visit(&mut self, i: usize) {
        self.top_active = true;
        self.inner = 0;
        self.eligible.clear();
        self.eligible.extend(self.subs[i].iter().map(|s| !s.packets.is_empty()));
        self.eligible_priority = self.cfg.priorities[i]
            .iter()
            .zip(&self.eligible)
            .filter(|(_, e)| **e)
            .map(|(p, _)| *p)
            .sum();
    }
}

impl Scheduler for PwfqRr {
    fn enqueue(&mut self, pkt: Packet, _now: SimTime) -> EnqueueOutcome {
        let (i, j) = self.sub_queue_for(pkt.precedence());
        let sub = &mut self.subs[i][j];
        if sub.packets.len() >= self.cfg.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        sub.bytes += pkt.size_bytes();
        sub.packets.push_back(pkt);
        self.top_backlog[i] += 1;
        self.total += 1;
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        if self.total == 0 {
            return None;
        }
        loop {
            let i = self.outer;
            if !self.top_active {
                if self.top_backlog[i] == 0 {
                    self.next_top();
                    continue;
                }
                self.begin_visit(i);
            }
            let j = self.inner;
            if j >= self.subs[i].len() {
                self.next_top();
                continue;
            }
            if !self.eligible[j] {
                self.next_sub();
                continue;
            }
            let sub = &mut self.subs[i][j];
            let Some(head) = sub.packets.front() else {
                sub.deficit = 0.0;
                self.next_sub();
                continue;
            };
            let size = head.size_bytes();
            if !self.sub_active {
                sub.deficit += self.top_budget[i] * self.cfg.priorities[i][j] / self.eligible_priority;
                self.sub_active = true;
            }
            if size <= sub.deficit {
                let p = sub.packets.pop_front().expect("head exists");
                if sub.packets.is_empty() {
                    sub.bytes = 0.0;
                    sub.deficit = 0.0;
                } else {
                    sub.bytes -= size;
                    sub.deficit -= size;
                }
                let emptied = sub.packets.is_empty();
                self.top_backlog[i] -= 1;
                self.total -= 1;
                self.last_departure_rotation = self.rotation;
                if emptied {
                    self.next_sub();
                }
                return Some(p);
            }
            self.next_sub();
        }
    }

    /// Sub-queues in row-major `(i, j)` order.
    fn backlog(&self) -> Backlog {
        Backlog {
            queues: self
                .subs
                .iter()
                .flatten()
                .map(|s| QueueBacklog { packets: s.packets.len(), bytes: s.bytes })
                .collect(),
        }
    }

    fn name(&self) -> &str {
        "pwfq_rr"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::testutil::*;

    fn cfg(weights: &[f64], priorities: Vec<Vec<f64>>, rules: Vec<(Vec<u8>, [usize; 2])>) -> PwfqConfig {
        PwfqConfig {
            weights: weights.to_vec(),
            priorities,
            base_slice_s: DEFAULT_BASE_SLICE_S,
            classifier: rules.into_iter().map(|(precedences, queue)| PwfqRule { precedences, queue }).collect(),
            capacity: 64,
        }
    }

    fn three_by_one() -> PwfqConfig {
        cfg(
            &[3.0, 2.0, 1.0],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![(vec![7, 6, 5], [0, 0]), (vec![4], [1, 0]), (vec![3, 2, 1, 0], [2, 0])],
        )
    }

    #[test]
    fn top_shares() {
        let c = cfg(&[1.0, 1.0, 1.0], vec![vec![1.0]; 3], vec![((0..8).collect(), [0, 0])]);
        for i in 0..3 {
            assert!((top_level_share(&c, i) - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = three_by_one();
        assert_eq!(top_level_share(&c, 0), 0.5);
        let sum: f64 = (0..3).map(|i| top_level_share(&c, i)).sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sub_shares() {
        let c = cfg(
            &[3.0, 2.0, 1.0],
            vec![vec![4.0, 3.0, 2.0, 1.0], vec![1.0], vec![1.0]],
            vec![((0..8).collect(), [0, 0])],
        );
        let expect = [0.2, 0.15, 0.1, 0.05];
        for (j, e) in expect.iter().enumerate() {
            assert!((sub_queue_share(&c, 0, j) - e).abs() <= 1e-12);
        }
        let sum: f64 = (0..4).map(|j| sub_queue_share(&c, 0, j)).sum();
        assert!((sum - top_level_share(&c, 0)).abs() <= 1e-12);
        assert_eq!(sub_queue_share(&c, 1, 0), top_level_share(&c, 1));
    }

    #[test]
    fn validation_catches_gaps() {
        let mut c = three_by_one();
        c.classifier.pop();
        assert!(c.validate().is_err());
        let mut c = three_by_one();
        c.weights = vec![1.0, 2.0, 3.0];
        assert!(c.validate().is_err());
        let mut c = three_by_one();
        c.priorities[1] = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = three_by_one();
        c.classifier[0].queue = [0, 3];
        assert!(c.validate().is_err());
        assert!(PwfqRr::new(three_by_one(), 0).is_err());
    }

    #[test]
    fn time_slices_follow_weights() {
        let c = three_by_one();
        assert!((c.time_slice(0).secs() - 0.010).abs() < 1e-15);
        let s = PwfqRr::new(c, 1_000_000).unwrap();
        assert!((s.top_budget(0) - 1250.0).abs() < 1e-9);
        assert!((s.top_budget(2) - 1250.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn starts_each_rotation_at_queue_one() {
        let mut s = PwfqRr::new(three_by_one(), 10_000_000).unwrap();
        s.enqueue(pkt(0, 0, 100), SimTime::ZERO);
        s.enqueue(pkt(1, 4, 100), SimTime::ZERO);
        s.enqueue(pkt(2, 5, 100), SimTime::ZERO);
        let out: Vec<_> = std::iter::from_fn(|| s.dequeue(SimTime::ZERO)).collect();
        assert_eq!(ids(&out), vec![2, 1, 0]);
    }

    #[test]
    fn lone_lowest_queue_gets_the_link() {
        let mut s = PwfqRr::new(three_by_one(), 56_000).unwrap();
        for i in 0..20 {
            s.enqueue(pkt(i, 0, 1500), SimTime::ZERO);
        }
        let out: Vec<_> = std::iter::from_fn(|| s.dequeue(SimTime::ZERO)).collect();
        assert_eq!(ids(&out), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn fifo_inside_sub_queue() {
        let mut s = PwfqRr::new(three_by_one(), 1_000_000).unwrap();
        for i in 0..10 {
            s.enqueue(pkt(i, 4, 300 + i * 10), SimTime::ZERO);
        }
        let out: Vec<_> = std::iter::from_fn(|| s.dequeue(SimTime::ZERO)).collect();
        assert_eq!(ids(&out), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn tail_drop_per_sub_queue() {
        let mut c = three_by_one();
        c.capacity = 2;
        let mut s = PwfqRr::new(c, 1_000_000).unwrap();
        assert!(s.enqueue(pkt(0, 0, 100), SimTime::ZERO).is_accepted());
        assert!(s.enqueue(pkt(1, 0, 100), SimTime::ZERO).is_accepted());
        assert!(!s.enqueue(pkt(2, 0, 100), SimTime::ZERO).is_accepted());
        assert!(s.enqueue(pkt(3, 5, 100), SimTime::ZERO).is_accepted());
        assert_eq!(s.sub_backlog(2, 0).packets, 2);
    }
}
