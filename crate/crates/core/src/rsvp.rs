//! Simplified unicast PATH/RESV soft-state signaling with per-interface
//! admission control, and the egress wrapper that serves admitted flows.
//!
//! Control messages are processed synchronously: a PATH or RESV walks its
//! whole route at the instant it is sent. Reservations are all-or-nothing;
//! a rejection anywhere leaves no router holding state for the flow.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{FlowId, NodeId, Packet, SimTime};
use crate::sched::{Backlog, DropReason, EnqueueOutcome, QueueBacklog, Scheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsvpConfig {
    pub reservable_fraction: f64,
    pub refresh_period_s: f64,
    /// Token bucket depth in packets of the flow's largest size.
    pub bucket_depth_pkts: f64,
}

impl Default for RsvpConfig {
    fn default() -> Self {
        Self { reservable_fraction: 0.75, refresh_period_s: 30.0, bucket_depth_pkts: 4.0 }
    }
}

impl RsvpConfig {
    pub const TIMEOUT_PERIODS: f64 = 3.0;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.reservable_fraction > 0.0 && self.reservable_fraction <= 1.0) {
            return Err(ConfigError::invalid("reservable_fraction must be in (0, 1]"));
        }
        if !(self.refresh_period_s.is_finite() && self.refresh_period_s > 0.0) {
            return Err(ConfigError::invalid("refresh_period_s must be positive"));
        }
        if !(self.bucket_depth_pkts.is_finite() && self.bucket_depth_pkts >= 1.0) {
            return Err(ConfigError::invalid("bucket_depth_pkts must be at least 1"));
        }
        Ok(())
    }

    /// Lifetime of installed state after its last refresh.
    pub fn timeout_s(&self) -> f64 {
        self.refresh_period_s * Self::TIMEOUT_PERIODS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub rate_bps: u64,
    pub burst_bytes: u64,
}

/// One RSVP-capable hop: `router` forwards toward `next_hop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hop {
    pub router: NodeId,
    pub next_hop: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathMsg {
    pub flow_id: FlowId,
    pub tspec: TrafficSpec,
    pub sender: NodeId,
    pub receiver: NodeId,
    /// Routers traversed so far, in forwarding order.
    pub hops: Vec<Hop>,
}

impl PathMsg {
    pub fn new(flow_id: FlowId, tspec: TrafficSpec, sender: NodeId, receiver: NodeId) -> Result<Self, ConfigError> {
        if tspec.rate_bps == 0 {
            return Err(ConfigError::invalid("requested rate must be positive"));
        }
        Ok(Self { flow_id, tspec, sender, receiver, hops: Vec::new() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResvMsg {
    pub flow_id: FlowId,
    pub rate_bps: u64,
    pub burst_bytes: u64,
    /// Hops in the order the RESV visits them (receiver side first).
    pub hops: Vec<Hop>,
}

impl ResvMsg {
    /// RESV echoing the delivered PATH's request along the reverse route.
    pub fn answering(path: &PathMsg) -> Self {
        Self {
            flow_id: path.flow_id,
            rate_bps: path.tspec.rate_bps,
            burst_bytes: path.tspec.burst_bytes,
            hops: path.hops.iter().rev().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectReason {
    InsufficientBandwidth { requested_bps: u64, available_bps: f64 },
    NoPathState,
    ExceedsPathRate,
    UnknownInterface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResvOutcome {
    Accepted,
    Rejected { at: NodeId, reason: RejectReason },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reservation {
    pub rate_bps: u64,
    pub buffer_bytes: u64,
    pub deadline: SimTime,
}

/// Reservations on one outgoing interface.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservationTable {
    capacity_bps: u64,
    limit_bps: f64,
    flows: BTreeMap<FlowId, Reservation>,
}

impl ReservationTable {
    pub fn new(capacity_bps: u64, reservable_fraction: f64) -> Self {
        Self { capacity_bps, limit_bps: capacity_bps as f64 * reservable_fraction, flows: BTreeMap::new() }
    }

    pub fn capacity_bps(&self) -> u64 {
        self.capacity_bps
    }

    pub fn limit_bps(&self) -> f64 {
        self.limit_bps
    }

    pub fn reserved_bps(&self) -> u64 {
        self.flows.values().map(|r| r.rate_bps).sum()
    }

    pub fn get(&self, flow: FlowId) -> Option<&Reservation> {
        self.flows.get(&flow)
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Installs or replaces the reservation for `flow` if the total stays
    /// within the reservable limit.
    pub fn admit(&mut self, flow: FlowId, r: Reservation) -> Result<(), RejectReason> {
        let others = self.reserved_bps() - self.flows.get(&flow).map_or(0, |x| x.rate_bps);
        if (others + r.rate_bps) as f64 > self.limit_bps {
            return Err(RejectReason::InsufficientBandwidth {
                requested_bps: r.rate_bps,
                available_bps: self.limit_bps - others as f64,
            });
        }
        self.flows.insert(flow, r);
        Ok(())
    }

    pub fn release(&mut self, flow: FlowId) -> Option<Reservation> {
        self.flows.remove(&flow)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PathState {
    tspec: TrafficSpec,
    next_hop: NodeId,
    deadline: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalEvent {
    PathDelivered { at: SimTime, flow: FlowId, hops: usize },
    PathNoRoute { at: SimTime, flow: FlowId },
    Established { at: SimTime, flow: FlowId, rate_bps: u64 },
    Refreshed { at: SimTime, flow: FlowId },
    /// Error returned to the receiver; signaling for the flow stops.
    ResvError { at: SimTime, flow: FlowId, router: NodeId, reason: RejectReason },
    Expired { at: SimTime, flow: FlowId },
}

impl SignalEvent {
    pub fn describe(&self) -> String {
        match self {
            SignalEvent::PathDelivered { at, flow, hops } => {
                format!("{:.6} path_delivered flow={} hops={hops}", at.secs(), flow.0)
            }
            SignalEvent::PathNoRoute { at, flow } => format!("{:.6} path_no_route flow={}", at.secs(), flow.0),
            SignalEvent::Established { at, flow, rate_bps } => {
                format!("{:.6} established flow={} rate_bps={rate_bps}", at.secs(), flow.0)
            }
            SignalEvent::Refreshed { at, flow } => format!("{:.6} refreshed flow={}", at.secs(), flow.0),
            SignalEvent::ResvError { at, flow, router, reason } => {
                format!("{:.6} resv_error flow={} router={} reason={reason:?}", at.secs(), flow.0, router.0)
            }
            SignalEvent::Expired { at, flow } => format!("{:.6} expired flow={}", at.secs(), flow.0),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct RouterState {
    interfaces: BTreeMap<NodeId, ReservationTable>,
    paths: BTreeMap<FlowId, PathState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub hops: Vec<Hop>,
    pub rate_bps: u64,
    pub burst_bytes: u64,
}

/// Signaling state of every RSVP-capable router in one simulation.
#[derive(Debug, Clone)]
pub struct RsvpDomain {
    config: RsvpConfig,
    routers: BTreeMap<NodeId, RouterState>,
    sessions: BTreeMap<FlowId, Session>,
    log: Vec<SignalEvent>,
}

impl RsvpDomain {
    pub fn new(config: RsvpConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self { config, routers: BTreeMap::new(), sessions: BTreeMap::new(), log: Vec::new() })
    }

    pub fn config(&self) -> &RsvpConfig {
        &self.config
    }

    /// Declares the interface `router -> next_hop` as reservable.
    pub fn add_interface(&mut self, router: NodeId, next_hop: NodeId, capacity_bps: u64) {
        self.routers
            .entry(router)
            .or_default()
            .interfaces
            .insert(next_hop, ReservationTable::new(capacity_bps, self.config.reservable_fraction));
    }

    pub fn table(&self, router: NodeId, next_hop: NodeId) -> Option<&ReservationTable> {
        self.routers.get(&router)?.interfaces.get(&next_hop)
    }

    pub fn tables(&self) -> impl Iterator<Item = (Hop, &ReservationTable)> {
        self.routers.iter().flat_map(|(r, st)| {
            st.interfaces.iter().map(move |(n, t)| (Hop { router: *r, next_hop: *n }, t))
        })
    }

    pub fn log(&self) -> &[SignalEvent] {
        &self.log
    }

    pub fn has_path_state(&self, router: NodeId, flow: FlowId) -> bool {
        self.routers.get(&router).is_some_and(|r| r.paths.contains_key(&flow))
    }

    /// Established flows with their routes.
    pub fn sessions(&self) -> &BTreeMap<FlowId, Session> {
        &self.sessions
    }

    /// True iff every router on the flow's route holds its reservation.
    pub fn is_established(&self, flow: FlowId) -> bool {
        self.sessions.get(&flow).is_some_and(|s| {
            s.hops.iter().all(|h| self.table(h.router, h.next_hop).is_some_and(|t| t.get(flow).is_some()))
        })
    }

    /// Whether any router holds any state (path or reservation) for `flow`.
    pub fn holds_state(&self, flow: FlowId) -> bool {
        self.routers
            .values()
            .any(|r| r.paths.contains_key(&flow) || r.interfaces.values().any(|t| t.get(flow).is_some()))
    }

    fn deadline(&self, now: SimTime) -> SimTime {
        now + SimTime::from_secs(self.config.timeout_s()).expect("validated period")
    }

    /// Carries `msg` along `route`, installing or refreshing path state at
    /// each RSVP-capable router. Returns the message as the receiver sees
    /// it, or `None` when there is no route.
    pub fn propagate_path(&mut self, mut msg: PathMsg, route: Option<&[Hop]>, now: SimTime) -> Option<PathMsg> {
        let Some(route) = route else {
            self.log.push(SignalEvent::PathNoRoute { at: now, flow: msg.flow_id });
            return None;
        };
        let deadline = self.deadline(now);
        for hop in route {
            let st = self.routers.entry(hop.router).or_default();
            st.paths.insert(msg.flow_id, PathState { tspec: msg.tspec, next_hop: hop.next_hop, deadline });
            msg.hops.push(*hop);
        }
        self.log.push(SignalEvent::PathDelivered { at: now, flow: msg.flow_id, hops: msg.hops.len() });
        Some(msg)
    }

    /// Admission decision of a single router.
    pub fn process_resv_at(&mut self, hop: Hop, msg: &ResvMsg, now: SimTime) -> ResvOutcome {
        let deadline = self.deadline(now);
        let reject = |reason| ResvOutcome::Rejected { at: hop.router, reason };
        let Some(st) = self.routers.get_mut(&hop.router) else {
            return reject(RejectReason::NoPathState);
        };
        let Some(path) = st.paths.get(&msg.flow_id) else {
            return reject(RejectReason::NoPathState);
        };
        if msg.rate_bps == 0 || msg.rate_bps > path.tspec.rate_bps {
            return reject(RejectReason::ExceedsPathRate);
        }
        if path.next_hop != hop.next_hop {
            return reject(RejectReason::UnknownInterface);
        }
        let Some(table) = st.interfaces.get_mut(&hop.next_hop) else {
            return reject(RejectReason::UnknownInterface);
        };
        let r = Reservation { rate_bps: msg.rate_bps, buffer_bytes: msg.burst_bytes, deadline };
        match table.admit(msg.flow_id, r) {
            Ok(()) => ResvOutcome::Accepted,
            Err(reason) => reject(reason),
        }
    }

    /// Walks the RESV hop by hop. On rejection the receiver is notified
    /// and routers that already accepted release the flow again.
    pub fn process_resv(&mut self, msg: &ResvMsg, now: SimTime) -> ResvOutcome {
        let refresh = self.sessions.contains_key(&msg.flow_id);
        let mut accepted = Vec::new();
        for &hop in &msg.hops {
            match self.process_resv_at(hop, msg, now) {
                ResvOutcome::Accepted => accepted.push(hop),
                rejected @ ResvOutcome::Rejected { at, reason } => {
                    self.log.push(SignalEvent::ResvError { at: now, flow: msg.flow_id, router: at, reason });
                    self.teardown(msg.flow_id);
                    return rejected;
                }
            }
        }
        let mut hops = msg.hops.clone();
        hops.reverse();
        self.sessions.insert(msg.flow_id, Session { hops, rate_bps: msg.rate_bps, burst_bytes: msg.burst_bytes });
        self.log.push(if refresh {
            SignalEvent::Refreshed { at: now, flow: msg.flow_id }
        } else {
            SignalEvent::Established { at: now, flow: msg.flow_id, rate_bps: msg.rate_bps }
        });
        ResvOutcome::Accepted
    }

    /// One full signaling exchange: PATH to the receiver, RESV back.
    pub fn signal(&mut self, path: PathMsg, route: Option<&[Hop]>, now: SimTime) -> Option<ResvOutcome> {
        let delivered = self.propagate_path(path, route, now)?;
        Some(self.process_resv(&ResvMsg::answering(&delivered), now))
    }

    /// Removes every flow whose path or reservation state timed out at
    /// some router, releasing it everywhere. Returns the released flows.
    pub fn expire(&mut self, now: SimTime) -> Vec<FlowId> {
        let mut stale = BTreeSet::new();
        for st in self.routers.values() {
            stale.extend(st.paths.iter().filter(|(_, p)| p.deadline <= now).map(|(f, _)| *f));
            for t in st.interfaces.values() {
                stale.extend(t.flows.iter().filter(|(_, r)| r.deadline <= now).map(|(f, _)| *f));
            }
        }
        for &flow in &stale {
            self.teardown(flow);
            self.log.push(SignalEvent::Expired { at: now, flow });
        }
        stale.into_iter().collect()
    }

    /// Earliest pending deadline, if any state is installed.
    pub fn next_deadline(&self) -> Option<SimTime> {
        self.routers
            .values()
            .flat_map(|st| {
                st.paths.values().map(|p| p.deadline).chain(st.interfaces.values().flat_map(|t| {
                    t.flows.values().map(|r| r.deadline)
                }))
            })
            .min()
    }

    fn teardown(&mut self, flow: FlowId) {
        for st in self.routers.values_mut() {
            st.paths.remove(&flow);
            for t in st.interfaces.values_mut() {
                t.release(flow);
            }
        }
        self.sessions.remove(&flow);
    }
}

/// Token bucket in bits. Starts full.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBucket {
    rate_bps: f64,
    depth_bits: f64,
    tokens: f64,
    last: SimTime,
}

impl TokenBucket {
    pub fn new(rate_bps: u64, depth_bytes: u64) -> Self {
        let depth_bits = depth_bytes as f64 * 8.0;
        Self { rate_bps: rate_bps as f64, depth_bits, tokens: depth_bits, last: SimTime::ZERO }
    }

    /// Consumes tokens for a conforming packet; leaves the bucket untouched
    /// otherwise.
    pub fn conform(&mut self, size_bits: u64, now: SimTime) -> bool {
        if now > self.last {
            self.tokens = (self.tokens + (now - self.last) * self.rate_bps).min(self.depth_bits);
            self.last = now;
        }
        let need = size_bits as f64;
        if need <= self.tokens {
            self.tokens -= need;
            true
        } else {
            false
        }
    }
}

/// Guaranteed strict-priority FIFO for policed reserved flows in front of a
/// best-effort discipline. Non-conforming packets are demoted, not dropped.
#[derive(Debug)]
pub struct ReservedService<S> {
    inner: S,
    policers: BTreeMap<FlowId, TokenBucket>,
    guaranteed: VecDeque<Packet>,
    bytes: f64,
    capacity: usize,
    guaranteed_bits: BTreeMap<FlowId, u64>,
}

impl<S: Scheduler> ReservedService<S> {
    pub fn new(inner: S, capacity: usize) -> Self {
        Self {
            inner,
            policers: BTreeMap::new(),
            guaranteed: VecDeque::new(),
            bytes: 0.0,
            capacity,
            guaranteed_bits: BTreeMap::new(),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn install(&mut self, flow: FlowId, rate_bps: u64, depth_bytes: u64) {
        self.policers.entry(flow).or_insert_with(|| TokenBucket::new(rate_bps, depth_bytes));
    }

    pub fn remove(&mut self, flow: FlowId) {
        self.policers.remove(&flow);
    }

    pub fn reserved_flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.policers.keys().copied()
    }

    /// Bits of `flow` admitted to the guaranteed queue so far.
    pub fn guaranteed_bits(&self, flow: FlowId) -> u64 {
        self.guaranteed_bits.get(&flow).copied().unwrap_or(0)
    }
}

impl<S: Scheduler> Scheduler for ReservedService<S> {
    fn enqueue(&mut self, pkt: Packet, now: SimTime) -> EnqueueOutcome {
        let conforming = self.policers.get_mut(&pkt.flow_id).is_some_and(|tb| tb.conform(pkt.size_bits(), now));
        if !conforming {
            return self.inner.enqueue(pkt, now);
        }
        if self.guaranteed.len() >= self.capacity {
            return EnqueueOutcome::Dropped(Box::new(pkt), DropReason::TailDrop);
        }
        *self.guaranteed_bits.entry(pkt.flow_id).or_default() += pkt.size_bits();
        self.bytes += pkt.size_bytes();
        self.guaranteed.push_back(pkt);
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        match self.guaranteed.pop_front() {
            Some(p) => {
                self.bytes = if self.guaranteed.is_empty() { 0.0 } else { self.bytes - p.size_bytes() };
                Some(p)
            }
            None => self.inner.dequeue(now),
        }
    }

    /// The guaranteed queue is reported first.
    fn backlog(&self) -> Backlog {
        let mut b = self.inner.backlog();
        b.queues.insert(0, QueueBacklog { packets: self.guaranteed.len(), bytes: self.bytes });
        b
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
