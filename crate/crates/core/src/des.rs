//! Deterministic discrete-event kernel.
//!
//! Events are popped in ascending `(fire_at, seq)` order, where `seq` is the
//! scheduling sequence number. Equal timestamps therefore resolve in the
//! order they were scheduled, independent of heap internals.
//!
//! Randomness comes from [`RandomStream`]: ChaCha8 seeded with the run's
//! master seed, with one ChaCha stream per traffic source selected by a
//! 64-bit FNV-1a hash of the source's stable name.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ScheduleError;
use crate::model::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    PacketArrival,
    TransmissionComplete,
    SourceEmit,
    SignalingTimer,
    SimEnd,
}

/// Implemented by event payloads so the kernel can trace them.
pub trait Tagged {
    fn kind(&self) -> EventKind;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

impl<P> Event<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.fire_at, self.seq)
    }
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<P> Eq for Event<P> {}
impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Pending events, popped strictly by `(fire_at, seq)`.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Event<P>>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new() }
    }
}

impl<P> EventQueue<P> {
    pub fn push(&mut self, ev: Event<P>) {
        self.heap.push(Reverse(ev));
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.fire_at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEntry {
    pub fire_at_bits: u64,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events_processed: u64,
    pub final_clock: SimTime,
}

/// Clock plus event queue. Single-threaded; one per simulation instance.
#[derive(Debug)]
pub struct Kernel<P> {
    clock: SimTime,
    queue: EventQueue<P>,
    next_seq: u64,
    processed: u64,
    trace: Option<Vec<TraceEntry>>,
    digest: u64,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Self {
            clock: SimTime::ZERO,
            queue: EventQueue::default(),
            next_seq: 0,
            processed: 0,
            trace: None,
            digest: FNV_OFFSET,
        }
    }

    /// Keep every processed event in memory (tests and debugging).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// FNV-1a digest over every processed `(fire_at, seq, kind)`.
    pub fn trace_digest(&self) -> u64 {
        self.digest
    }

    /// Schedules `payload` at `fire_at`, returning the assigned sequence number.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<u64, ScheduleError> {
        if fire_at < self.clock {
            return Err(ScheduleError::InThePast { fire_at: fire_at.secs(), now: self.clock.secs() });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { fire_at, seq, payload });
        Ok(seq)
    }

    /// Schedules `payload` `delay` after the current clock.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> Result<u64, ScheduleError> {
        self.schedule(self.clock + delay, payload)
    }
}

impl<P: Tagged> Kernel<P> {
    /// Processes every event with `fire_at <= end` in order, then sets the
    /// clock to `end`. Stops early if the handler fails.
    pub fn run_until<E, F>(&mut self, end: SimTime, mut handler: F) -> Result<RunSummary, E>
    where
        F: FnMut(&mut Kernel<P>, Event<P>) -> Result<(), E>,
    {
        let start = self.processed;
        while let Some(t) = self.queue.peek_time() {
            if t > end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.fire_at >= self.clock);
            self.clock = ev.fire_at;
            self.record(&ev);
            self.processed += 1;
            handler(self, ev)?;
        }
        if end > self.clock {
            self.clock = end;
        }
        Ok(RunSummary { events_processed: self.processed - start, final_clock: self.clock })
    }

    fn record(&mut self, ev: &Event<P>) {
        let entry = TraceEntry { fire_at_bits: ev.fire_at.secs().to_bits(), seq: ev.seq, kind: ev.payload.kind() };
        self.digest = fnv1a(self.digest, &entry.fire_at_bits.to_le_bytes());
        self.digest = fnv1a(self.digest, &entry.seq.to_le_bytes());
        self.digest = fnv1a(self.digest, &[entry.kind as u8]);
        if let Some(t) = self.trace.as_mut() {
            t.push(entry);
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Seeded pseudorandom stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for the component called `name`. Adding or
    /// removing other names never changes the draws seen here.
    pub fn substream(master_seed: u64, name: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(fnv1a(FNV_OFFSET, name.as_bytes()));
        Self { rng }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
