//! Egress packet schedulers behind one contract.
//!
//! Every discipline classifies on the ToS precedence carried in the DS
//! field. Queue index 0 always holds the highest precedences, which is the
//! order strict-priority service follows.

mod drr;
mod fifo;
mod llq;
mod pq;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{Packet, SimTime};

pub use drr::Drr;
pub use fifo::Fifo;
pub use llq::Llq;
pub use pq::PriorityQueue;

pub const DEFAULT_CAPACITY: usize = 64;
pub const DEFAULT_CQ_QUANTUM_BYTES: f64 = 1500.0;
pub const DEFAULT_WFQ_BASE_QUANTUM_BYTES: f64 = 1500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TailDrop,
    NoRoute,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TailDrop => "tail_drop",
            DropReason::NoRoute => "no_route",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tail_drop" => Some(DropReason::TailDrop),
            "no_route" => Some(DropReason::NoRoute),
            _ => None,
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnqueueOutcome {
    Accepted,
    /// The packet was refused and is handed back for accounting.
    Dropped(Box<Packet>, DropReason),
}

impl EnqueueOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, EnqueueOutcome::Accepted)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueueBacklog {
    pub packets: usize,
    pub bytes: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Backlog {
    pub queues: Vec<QueueBacklog>,
}

impl Backlog {
    pub fn packets(&self) -> usize {
        self.queues.iter().map(|q| q.packets).sum()
    }

    pub fn bytes(&self) -> f64 {
        self.queues.iter().map(|q| q.bytes).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.packets() == 0
    }
}

/// The uniform enqueue/dequeue contract all disciplines implement.
///
/// Implementations are work conserving: whenever `backlog()` is non-empty
/// `dequeue` returns a packet.
pub trait Scheduler: Send {
    fn enqueue(&mut self, pkt: Packet, now: SimTime) -> EnqueueOutcome;
    fn dequeue(&mut self, now: SimTime) -> Option<Packet>;
    fn backlog(&self) -> Backlog;
    fn name(&self) -> &str;
}

impl Scheduler for Box<dyn Scheduler> {
    fn enqueue(&mut self, pkt: Packet, now: SimTime) -> EnqueueOutcome {
        (**self).enqueue(pkt, now)
    }
    fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        (**self).dequeue(now)
    }
    fn backlog(&self) -> Backlog {
        (**self).backlog()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Maps each of the eight ToS precedence values to a queue index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct Classifier {
    groups: Vec<Vec<u8>>,
    queue_of: [usize; 8],
}

impl Classifier {
    /// `groups[k]` lists the precedences served by queue `k`. Every
    /// precedence 0..=7 must appear exactly once, and groups must be in
    /// strictly descending precedence order.
    pub fn new(groups: Vec<Vec<u8>>) -> Result<Self, ConfigError> {
        if groups.is_empty() {
            return Err(ConfigError::invalid("classifier needs at least one queue"));
        }
        let mut queue_of = [usize::MAX; 8];
        let mut prev_min: Option<u8> = None;
        for (k, g) in groups.iter().enumerate() {
            let (Some(&min), Some(&max)) = (g.iter().min(), g.iter().max()) else {
                return Err(ConfigError::invalid(format!("classifier queue {k} is empty")));
            };
            if let Some(pm) = prev_min {
                if max >= pm {
                    return Err(ConfigError::invalid(
                        "classifier queues must be ordered from highest to lowest precedence",
                    ));
                }
            }
            prev_min = Some(min);
            for &p in g {
                if p > 7 {
                    return Err(ConfigError::invalid(format!("precedence {p} exceeds 3 bits")));
                }
                if queue_of[p as usize] != usize::MAX {
                    return Err(ConfigError::invalid(format!("precedence {p} mapped twice")));
                }
                queue_of[p as usize] = k;
            }
        }
        if let Some(p) = queue_of.iter().position(|&q| q == usize::MAX) {
            return Err(ConfigError::invalid(format!("precedence {p} is not mapped to a queue")));
        }
        Ok(Self { groups, queue_of })
    }

    /// Voice (5..=7), video (4) and data (0..=3) queues.
    pub fn three_class() -> Self {
        Self::new(vec![vec![7, 6, 5], vec![4], vec![3, 2, 1, 0]]).expect("valid")
    }

    /// A queue per precedence value, 7 first.
    pub fn per_precedence() -> Self {
        Self::new((0..8).rev().map(|p| vec![p]).collect()).expect("valid")
    }

    pub fn single() -> Self {
        Self::new(vec![(0..8).rev().collect()]).expect("valid")
    }

    pub fn queue_count(&self) -> usize {
        self.groups.len()
    }

    pub fn queue_for(&self, precedence: u8) -> usize {
        self.queue_of[(precedence & 7) as usize]
    }

    pub fn classify(&self, pkt: &Packet) -> usize {
        self.queue_for(pkt.precedence())
    }

    pub fn groups(&self) -> &[Vec<u8>] {
        &self.groups
    }

    /// Weight per queue derived from its lowest precedence: `min + 1`.
    pub fn precedence_weights(&self) -> Vec<f64> {
        self.groups.iter().map(|g| *g.iter().min().expect("non-empty") as f64 + 1.0).collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for Classifier {
    type Error = ConfigError;
    fn try_from(groups: Vec<Vec<u8>>) -> Result<Self, Self::Error> {
        Classifier::new(groups)
    }
}

impl From<Classifier> for Vec<Vec<u8>> {
    fn from(c: Classifier) -> Self {
        c.groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueConfig {
    /// Per internal queue, in packets.
    pub capacity: usize,
    pub classifier: Classifier,
    /// WFQ weights per classifier queue. `None` uses precedence weights.
    pub weights: Option<Vec<f64>>,
    /// CQ per-class quantum, or WFQ base quantum scaled by weight.
    pub quantum_bytes: f64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            classifier: Classifier::three_class(),
            weights: None,
            quantum_bytes: DEFAULT_CQ_QUANTUM_BYTES,
        }
    }
}

impl QueueConfig {
    fn check_capacity(&self) -> Result<(), ConfigError> {
        if self.capacity == 0 {
            return Err(ConfigError::invalid("queue capacity must be positive"));
        }
        Ok(())
    }

    fn check_quantum(&self) -> Result<(), ConfigError> {
        if !(self.quantum_bytes.is_finite() && self.quantum_bytes > 0.0) {
            return Err(ConfigError::invalid("quantum must be positive"));
        }
        Ok(())
    }
}

pub fn fifo(config: &QueueConfig) -> Result<Fifo, ConfigError> {
    config.check_capacity()?;
    Ok(Fifo::new(config.capacity))
}

pub fn pq(config: &QueueConfig) -> Result<PriorityQueue, ConfigError> {
    config.check_capacity()?;
    Ok(PriorityQueue::new(config.capacity, config.classifier.clone()))
}

/// Custom queuing: deficit round robin with an equal byte quantum per class.
pub fn cq(config: &QueueConfig) -> Result<Drr, ConfigError> {
    config.check_capacity()?;
    config.check_quantum()?;
    let quanta = vec![config.quantum_bytes; config.classifier.queue_count()];
    Drr::new("cq", config.capacity, config.classifier.clone(), quanta)
}

/// Weighted fair queuing realised as weighted deficit round robin:
/// queue `k` receives `quantum_bytes * weight[k]` per round.
pub fn wfq(config: &QueueConfig) -> Result<Drr, ConfigError> {
    config.check_capacity()?;
    config.check_quantum()?;
    let weights = config.weights.clone().unwrap_or_else(|| config.classifier.precedence_weights());
    if weights.len() != config.classifier.queue_count() {
        return Err(ConfigError::invalid(format!(
            "{} weights given for {} queues",
            weights.len(),
            config.classifier.queue_count()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(ConfigError::invalid(format!("weight {w} must be positive")));
    }
    let quanta = weights.iter().map(|w| w * config.quantum_bytes).collect();
    Drr::new("wfq", config.capacity, config.classifier.clone(), quanta)
}

/// Grafts an exhaustive low-latency queue for `llq_precedences` onto `inner`.
pub fn with_llq<S: Scheduler + 'static>(
    inner: S,
    llq_precedences: &[u8],
    capacity: usize,
) -> Result<Llq<S>, ConfigError> {
    if capacity == 0 {
        return Err(ConfigError::invalid("queue capacity must be positive"));
    }
    Llq::new(inner, llq_precedences, capacity)
}
