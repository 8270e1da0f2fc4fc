//! Executable scheduler and admission-control invariants.
//!
//! [`check_ops`] replays an operation sequence against one discipline and
//! verifies, after every step:
//! - packet and byte conservation against an independent shadow model,
//! - work conservation (`dequeue` yields a packet iff one is queued),
//! - FIFO order inside every internal queue,
//! - tail drop only at a full queue,
//! - strict-priority maximality for PQ,
//! - per-round service bound `quantum + max packet` for DRR-based queues,
//!   and `budget + max packet` per sub-queue rotation for PWFQ-RR,
//! - LLQ exhaustiveness.

use std::collections::{BTreeMap, VecDeque};

use crate::des::RandomStream;
use crate::model::{FlowId, Ipv6Marking, NodeId, Packet, PacketId, SimTime, TrafficClass};
use crate::pwfq::{PwfqConfig, PwfqRr, PwfqRule};
use crate::rsvp::{Hop, PathMsg, RsvpConfig, RsvpDomain, TrafficSpec};
use crate::sched::{self, Classifier, Drr, EnqueueOutcome, Fifo, Llq, PriorityQueue, QueueConfig, Scheduler};

/// Packets per internal queue in conformance runs; small, so drops occur.
pub const CAPACITY: usize = 8;
pub const LINK_RATE_BPS: u64 = 1_000_000;
pub const MAX_PACKET_BYTES: u32 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Enqueue { precedence: u8, bytes: u32 },
    Dequeue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    Fifo,
    Pq,
    Cq,
    Wfq,
    CqLlq,
    WfqLlq,
    PwfqRr,
}

impl Discipline {
    pub const ALL: [Discipline; 7] = [
        Discipline::Fifo,
        Discipline::Pq,
        Discipline::Cq,
        Discipline::Wfq,
        Discipline::CqLlq,
        Discipline::WfqLlq,
        Discipline::PwfqRr,
    ];
}

const LLQ_PRECEDENCES: [u8; 3] = [5, 6, 7];

fn queue_config() -> QueueConfig {
    QueueConfig { capacity: CAPACITY, quantum_bytes: 500.0, ..Default::default() }
}

/// Two top-level queues over three sub-queues.
pub fn conformance_pwfq() -> PwfqConfig {
    PwfqConfig {
        weights: vec![3.0, 1.0],
        priorities: vec![vec![2.0, 1.0], vec![1.0]],
        base_slice_s: 0.004,
        classifier: vec![
            PwfqRule { precedences: vec![7, 6, 5], queue: [0, 0] },
            PwfqRule { precedences: vec![4], queue: [0, 1] },
            PwfqRule { precedences: vec![3, 2, 1, 0], queue: [1, 0] },
        ],
        capacity: CAPACITY,
    }
}

enum Subject {
    Fifo(Fifo),
    Pq(PriorityQueue),
    Drr(Drr),
    Llq(Llq<Drr>),
    Pwfq(PwfqRr),
}

impl Subject {
    fn new(d: Discipline) -> Self {
        let cfg = queue_config();
        let llq = |inner| sched::with_llq(inner, &LLQ_PRECEDENCES, CAPACITY).expect("static config");
        match d {
            Discipline::Fifo => Subject::Fifo(sched::fifo(&cfg).expect("static config")),
            Discipline::Pq => Subject::Pq(sched::pq(&cfg).expect("static config")),
            Discipline::Cq => Subject::Drr(sched::cq(&cfg).expect("static config")),
            Discipline::Wfq => Subject::Drr(sched::wfq(&cfg).expect("static config")),
            Discipline::CqLlq => Subject::Llq(llq(sched::cq(&cfg).expect("static config"))),
            Discipline::WfqLlq => Subject::Llq(llq(sched::wfq(&cfg).expect("static config"))),
            Discipline::PwfqRr => {
                Subject::Pwfq(PwfqRr::new(conformance_pwfq(), LINK_RATE_BPS).expect("static config"))
            }
        }
    }

    fn sched(&mut self) -> &mut dyn Scheduler {
        match self {
            Subject::Fifo(s) => s,
            Subject::Pq(s) => s,
            Subject::Drr(s) => s,
            Subject::Llq(s) => s,
            Subject::Pwfq(s) => s,
        }
    }

    /// Index into `backlog().queues` of the queue a precedence lands in.
    fn queue_of(&self, precedence: u8) -> usize {
        let classifier = Classifier::three_class();
        match self {
            Subject::Fifo(_) => 0,
            Subject::Pq(_) | Subject::Drr(_) => classifier.queue_for(precedence),
            Subject::Llq(_) => {
                if LLQ_PRECEDENCES.contains(&precedence) {
                    0
                } else {
                    1 + classifier.queue_for(precedence)
                }
            }
            Subject::Pwfq(s) => {
                let (i, j) = s.sub_queue_for(precedence);
                s.config().priorities[..i].iter().map(Vec::len).sum::<usize>() + j
            }
        }
    }

    fn queue_count(&self) -> usize {
        match self {
            Subject::Fifo(_) => 1,
            Subject::Llq(_) => 4,
            Subject::Pwfq(s) => s.config().priorities.iter().map(Vec::len).sum(),
            _ => 3,
        }
    }

    /// Service round of the last departure and per-queue byte bound for it.
    fn round_bound(&self, queue: usize) -> Option<(u64, f64)> {
        let max = MAX_PACKET_BYTES as f64;
        match self {
            Subject::Drr(d) => Some((d.last_departure_round(), d.quanta()[queue] + max)),
            Subject::Llq(l) if queue > 0 => {
                let d = l.inner();
                Some((d.last_departure_round(), d.quanta()[queue - 1] + max))
            }
            Subject::Pwfq(p) => {
                let mut i = 0;
                let mut rest = queue;
                while rest >= p.config().priorities[i].len() {
                    rest -= p.config().priorities[i].len();
                    i += 1;
                }
                Some((p.last_departure_rotation(), p.top_budget(i) + max))
            }
            _ => None,
        }
    }
}

fn packet(id: u64, precedence: u8, bytes: u32) -> Packet {
    let class = match precedence {
        5..=7 => TrafficClass::Voice,
        4 => TrafficClass::Video,
        _ => TrafficClass::Data,
    };
    let marking = Ipv6Marking::new(precedence << 3, 0, 0).expect("precedence below 8");
    Packet::new(PacketId(id), FlowId(0), NodeId(0), NodeId(1), bytes as u64 * 8, marking, class, SimTime::ZERO)
        .expect("positive size")
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CheckStats {
    pub accepted: u64,
    pub dropped: u64,
    pub departed: u64,
}

/// Replays `ops` against a fresh `discipline`, failing with a description
/// of the first violated invariant.
pub fn check_ops(discipline: Discipline, ops: &[Op]) -> Result<CheckStats, String> {
    let mut subject = Subject::new(discipline);
    let n = subject.queue_count();
    let capacity = match discipline {
        Discipline::Fifo => queue_config().capacity,
        _ => CAPACITY,
    };
    let mut shadow: Vec<VecDeque<(u64, u32)>> = vec![VecDeque::new(); n];
    let mut served: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    let mut stats = CheckStats::default();
    let now = SimTime::ZERO;
    for (step, op) in ops.iter().enumerate() {
        let fail = |msg: String| Err(format!("{discipline:?} step {step}: {msg}"));
        match *op {
            Op::Enqueue { precedence, bytes } => {
                let id = step as u64;
                let q = subject.queue_of(precedence);
                match subject.sched().enqueue(packet(id, precedence, bytes), now) {
                    EnqueueOutcome::Accepted => {
                        if shadow[q].len() >= capacity {
                            return fail(format!("queue {q} accepted beyond capacity"));
                        }
                        shadow[q].push_back((id, bytes));
                        stats.accepted += 1;
                    }
                    EnqueueOutcome::Dropped(p, _) => {
                        if p.id.0 != id {
                            return fail("drop returned a different packet".into());
                        }
                        if shadow[q].len() < capacity {
                            return fail(format!("queue {q} dropped below capacity"));
                        }
                        stats.dropped += 1;
                    }
                }
            }
            Op::Dequeue => {
                let before = subject.sched().backlog();
                let out = subject.sched().dequeue(now);
                let queued = shadow.iter().any(|q| !q.is_empty());
                let Some(p) = out else {
                    if queued {
                        return fail("idle while packets are queued".into());
                    }
                    continue;
                };
                let q = subject.queue_of(p.precedence());
                match shadow[q].pop_front() {
                    Some((id, _)) if id == p.id.0 => {}
                    other => return fail(format!("queue {q} released {} out of order, expected {other:?}", p.id.0)),
                }
                stats.departed += 1;
                if matches!(subject, Subject::Pq(_)) {
                    if let Some(h) = before.queues[..q].iter().position(|b| b.packets > 0) {
                        return fail(format!("served queue {q} while higher queue {h} waited"));
                    }
                }
                if matches!(subject, Subject::Llq(_)) && before.queues[0].packets > 0 && q != 0 {
                    return fail("inner queue served while the low latency queue waited".into());
                }
                if let Some((round, bound)) = subject.round_bound(q) {
                    let s = served.entry((round, q)).or_default();
                    *s += p.size_bytes();
                    if *s > bound + 1e-9 {
                        return fail(format!("queue {q} sent {s} bytes in round {round}, bound {bound}"));
                    }
                }
            }
        }
        let b = subject.sched().backlog();
        if b.queues.len() != n {
            return Err(format!("{discipline:?}: backlog reports {} queues, expected {n}", b.queues.len()));
        }
        for (k, (got, want)) in b.queues.iter().zip(&shadow).enumerate() {
            let bytes: f64 = want.iter().map(|(_, s)| *s as f64).sum();
            if got.packets != want.len() || (got.bytes - bytes).abs() > 1e-6 {
                return Err(format!(
                    "{discipline:?} step {step}: queue {k} holds {}/{} packets/bytes, expected {}/{bytes}",
                    got.packets,
                    got.bytes,
                    want.len()
                ));
            }
        }
    }
    Ok(stats)
}

/// Random operation sequence: mostly enqueues early, drains at the end.
pub fn random_ops(rng: &mut RandomStream, len: usize) -> Vec<Op> {
    let mut ops = Vec::with_capacity(len + 64);
    for _ in 0..len {
        if rng.uniform() < 0.55 {
            let precedence = (rng.uniform() * 8.0) as u8;
            let bytes = 40 + (rng.uniform() * (MAX_PACKET_BYTES - 40) as f64) as u32;
            ops.push(Op::Enqueue { precedence, bytes });
        } else {
            ops.push(Op::Dequeue);
        }
    }
    ops.extend(std::iter::repeat_n(Op::Dequeue, 64));
    ops
}

/// Runs `count` random sequences per discipline.
pub fn random_scheduler_suite(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = RandomStream::new(seed);
    for d in Discipline::ALL {
        for _ in 0..count {
            let len = 1 + (rng.uniform() * 200.0) as usize;
            let ops = random_ops(&mut rng, len);
            check_ops(d, &ops)?;
        }
    }
    Ok(count * Discipline::ALL.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionOp {
    /// Signal flow `flow` with `rate_bps` along route `route`.
    Request { flow: u32, rate_bps: u64, route: usize },
    /// Advance the clock by `secs` and expire stale state.
    Advance { secs: u32 },
}

/// Routes over a three-router chain `r0 - r1 - r2` with a host on each end.
pub fn admission_routes() -> Vec<Vec<Hop>> {
    let (r0, r1, r2, a, b) = (NodeId(0), NodeId(1), NodeId(2), NodeId(10), NodeId(11));
    vec![
        vec![Hop { router: r0, next_hop: r1 }, Hop { router: r1, next_hop: r2 }, Hop { router: r2, next_hop: b }],
        vec![Hop { router: r2, next_hop: r1 }, Hop { router: r1, next_hop: r0 }, Hop { router: r0, next_hop: a }],
        vec![Hop { router: r1, next_hop: r2 }, Hop { router: r2, next_hop: b }],
    ]
}

pub fn admission_domain(config: RsvpConfig) -> RsvpDomain {
    let mut d = RsvpDomain::new(config).expect("valid config");
    let capacities = [1_544_000, 1_000_000, 56_000, 100_000_000];
    for (k, route) in admission_routes().iter().enumerate() {
        for (h, hop) in route.iter().enumerate() {
            if d.table(hop.router, hop.next_hop).is_none() {
                d.add_interface(hop.router, hop.next_hop, capacities[(k + h) % capacities.len()]);
            }
        }
    }
    d
}

/// Replays admission operations, checking after each that no interface
/// exceeds its reservable limit and that every established flow holds
/// state on every hop.
pub fn check_admissions(ops: &[AdmissionOp]) -> Result<(), String> {
    let routes = admission_routes();
    let mut d = admission_domain(RsvpConfig::default());
    let mut now = 0.0;
    for (step, op) in ops.iter().enumerate() {
        let t = SimTime::from_secs(now).expect("non-negative");
        match *op {
            AdmissionOp::Request { flow, rate_bps, route } => {
                let r = &routes[route % routes.len()];
                let tspec = TrafficSpec { rate_bps: rate_bps.max(1), burst_bytes: 800 };
                let msg = PathMsg::new(FlowId(flow), tspec, NodeId(10), NodeId(11)).map_err(|e| e.to_string())?;
                d.signal(msg, Some(r), t);
            }
            AdmissionOp::Advance { secs } => {
                now += secs as f64;
                d.expire(SimTime::from_secs(now).expect("non-negative"));
            }
        }
        for (hop, table) in d.tables() {
            if table.reserved_bps() as f64 > table.limit_bps() {
                return Err(format!(
                    "step {step}: interface {:?} reserves {} over limit {}",
                    hop,
                    table.reserved_bps(),
                    table.limit_bps()
                ));
            }
        }
        for flow in d.sessions().keys() {
            if !d.is_established(*flow) {
                return Err(format!("step {step}: flow {} partially installed", flow.0));
            }
        }
    }
    Ok(())
}

pub fn random_admissions(rng: &mut RandomStream, len: usize) -> Vec<AdmissionOp> {
    (0..len)
        .map(|_| {
            if rng.uniform() < 0.8 {
                AdmissionOp::Request {
                    flow: (rng.uniform() * 24.0) as u32,
                    rate_bps: 1 + (rng.uniform() * 400_000.0) as u64,
                    route: (rng.uniform() * 3.0) as usize,
                }
            } else {
                AdmissionOp::Advance { secs: (rng.uniform() * 60.0) as u32 }
            }
        })
        .collect()
}

/// Runs `count` random admission sequences.
pub fn random_admission_suite(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = RandomStream::new(seed);
    for _ in 0..count {
        let len = 1 + (rng.uniform() * 120.0) as usize;
        check_admissions(&random_admissions(&mut rng, len))?;
    }
    Ok(count)
}

/// Establishes flows, refreshes them on an irregular schedule, then stops
/// refreshing. State must survive until just before the timeout and be
/// gone, with every reservation released, once the timeout has elapsed.
/// Returns the time of the last refresh.
pub fn check_soft_state_release(rng: &mut RandomStream) -> Result<f64, String> {
    let cfg = RsvpConfig::default();
    let timeout = cfg.timeout_s();
    let routes = admission_routes();
    let mut d = admission_domain(cfg.clone());
    let flows: Vec<u32> = (0..4).collect();
    let at = |t: f64| SimTime::from_secs(t).expect("non-negative");
    let mut now = 0.0;
    let refreshes = 1 + (rng.uniform() * 6.0) as usize;
    for k in 0..refreshes {
        if k > 0 {
            now += rng.uniform() * cfg.refresh_period_s;
            d.expire(at(now));
        }
        for &f in &flows {
            let tspec = TrafficSpec { rate_bps: 8_000, burst_bytes: 800 };
            let msg = PathMsg::new(FlowId(f), tspec, NodeId(10), NodeId(11)).map_err(|e| e.to_string())?;
            d.signal(msg, Some(&routes[f as usize % routes.len()]), at(now));
        }
    }
    d.expire(at(now + timeout - 1e-3));
    if let Some(f) = flows.iter().find(|f| !d.is_established(FlowId(**f))) {
        return Err(format!("flow {f} expired before the timeout"));
    }
    d.expire(at(now + timeout));
    if let Some(f) = flows.iter().find(|f| d.holds_state(FlowId(**f))) {
        return Err(format!("flow {f} outlived the timeout"));
    }
    if d.tables().any(|(_, tb)| !tb.is_empty()) {
        return Err("reservations left after expiry".into());
    }
    Ok(now)
}
