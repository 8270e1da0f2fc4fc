//! Deterministic discrete-event simulator for packet scheduling and QoS.
//!
//! The scheduling disciplines live in [`sched`] and [`pwfq`]; [`network`]
//! drives them over a topology built from a [`scenario::ScenarioConfig`].

pub mod conformance;
pub mod des;
pub mod error;
pub mod metrics;
pub mod model;
pub mod network;
pub mod output;
pub mod pwfq;
pub mod rsvp;
pub mod scenario;
pub mod sched;
pub mod traffic;

pub use error::{ConfigError, ModelError, ScheduleError, SimError};
pub use model::{FlowId, Ipv6Marking, NodeId, Packet, PacketId, SimTime, TrafficClass};
pub use network::{run, RunResult};
pub use pwfq::{PwfqConfig, PwfqRr};
pub use scenario::{build_scenario, Overrides, ScenarioConfig, SchedulerKind};
pub use sched::{Classifier, DropReason, EnqueueOutcome, QueueConfig, Scheduler};
