//! Packets, simulated time, and the IPv6 QoS markings routers classify on.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// A point (or span) on the simulated time axis, in seconds.
///
/// Always finite and non-negative, which makes the total order below sound.
#[derive(Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(seconds: f64) -> Result<Self, ModelError> {
        if seconds.is_finite() && seconds >= 0.0 {
            // -0.0 and 0.0 compare equal but hash/format differently; normalise.
            Ok(SimTime(seconds + 0.0))
        } else {
            Err(ModelError::InvalidTime(seconds))
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// Elapsed span since `earlier`, clamped at zero.
    pub fn since(self, earlier: SimTime) -> SimTime {
        SimTime((self.0 - earlier.0).max(0.0))
    }
}

impl TryFrom<f64> for SimTime {
    type Error = ModelError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        SimTime::from_secs(value)
    }
}

impl From<SimTime> for f64 {
    fn from(t: SimTime) -> f64 {
        t.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

/// Serialization time of `size_bits` on a link running at `link_rate_bps`.
pub fn transmission_time(size_bits: u64, link_rate_bps: u64) -> Result<SimTime, ModelError> {
    if size_bits == 0 {
        return Err(ModelError::InvalidArgument("packet size must be positive".into()));
    }
    if link_rate_bps == 0 {
        return Err(ModelError::InvalidArgument("link rate must be positive".into()));
    }
    SimTime::from_secs(size_bits as f64 / link_rate_bps as f64)
}

pub const FLOW_LABEL_MAX: u32 = 0xF_FFFF;
pub const DSCP_MAX: u8 = 63;
pub const LEGACY_PRIORITY_MAX: u8 = 15;

/// QoS-relevant header fields of an IPv6 packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ipv6Marking {
    dscp: u8,
    flow_label: u32,
    legacy_priority: u8,
}

impl Ipv6Marking {
    pub fn new(dscp: u8, flow_label: u32, legacy_priority: u8) -> Result<Self, ModelError> {
        if dscp > DSCP_MAX {
            return Err(ModelError::InvalidArgument(format!("dscp {dscp} exceeds 6 bits")));
        }
        if flow_label > FLOW_LABEL_MAX {
            return Err(ModelError::InvalidArgument(format!(
                "flow label {flow_label:#x} exceeds 20 bits"
            )));
        }
        if legacy_priority > LEGACY_PRIORITY_MAX {
            return Err(ModelError::InvalidArgument(format!(
                "legacy priority {legacy_priority} exceeds 4 bits"
            )));
        }
        Ok(Self { dscp, flow_label, legacy_priority })
    }

    pub fn dscp(&self) -> u8 {
        self.dscp
    }

    pub fn flow_label(&self) -> u32 {
        self.flow_label
    }

    pub fn legacy_priority(&self) -> u8 {
        self.legacy_priority
    }

    /// Class-selector precedence carried in the top three DSCP bits.
    pub fn precedence(&self) -> u8 {
        self.dscp >> 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    Voice,
    Video,
    Data,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Voice, TrafficClass::Video, TrafficClass::Data];

    /// Default ToS precedence for the class.
    pub fn precedence(self) -> u8 {
        match self {
            TrafficClass::Voice => 5,
            TrafficClass::Video => 4,
            TrafficClass::Data => 0,
        }
    }

    /// Class-selector codepoint matching [`TrafficClass::precedence`].
    pub fn default_dscp(self) -> u8 {
        self.precedence() << 3
    }

    /// Value for the original 4-bit Priority field. Real-time classes sit
    /// in the non-congestion-controlled 8..=15 range.
    pub fn legacy_priority(self) -> u8 {
        match self {
            TrafficClass::Voice => 15,
            TrafficClass::Video => 12,
            TrafficClass::Data => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Voice => "voice",
            TrafficClass::Video => "video",
            TrafficClass::Data => "data",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "voice" => Some(TrafficClass::Voice),
            "video" => Some(TrafficClass::Video),
            "data" => Some(TrafficClass::Data),
            _ => None,
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketId(pub u64);

impl PacketId {
    /// Ids are unique per run: the owning source index in the high bits,
    /// the source's emission counter in the low 40.
    pub fn new(source_index: u32, seq: u64) -> Self {
        debug_assert!(seq < (1 << 40));
        PacketId(((source_index as u64) << 40) | seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub flow_id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    size_bits: u64,
    pub marking: Ipv6Marking,
    pub class: TrafficClass,
    pub created_at: SimTime,
    delivered_at: Option<SimTime>,
}

impl Packet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: PacketId,
        flow_id: FlowId,
        src: NodeId,
        dst: NodeId,
        size_bits: u64,
        marking: Ipv6Marking,
        class: TrafficClass,
        created_at: SimTime,
    ) -> Result<Self, ModelError> {
        if size_bits == 0 {
            return Err(ModelError::InvalidArgument("packet size must be positive".into()));
        }
        Ok(Self { id, flow_id, src, dst, size_bits, marking, class, created_at, delivered_at: None })
    }

    pub fn size_bits(&self) -> u64 {
        self.size_bits
    }

    pub fn size_bytes(&self) -> f64 {
        self.size_bits as f64 / 8.0
    }

    pub fn precedence(&self) -> u8 {
        self.marking.precedence()
    }

    pub fn delivered_at(&self) -> Option<SimTime> {
        self.delivered_at
    }

    pub fn mark_delivered(&mut self, at: SimTime) -> Result<(), ModelError> {
        if at < self.created_at {
            return Err(ModelError::InvalidArgument(format!(
                "delivery at {at} precedes creation at {}",
                self.created_at
            )));
        }
        self.delivered_at = Some(at);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowLabelStatus {
    NoFlow,
    ValidFlow,
    OutOfRange,
}

pub fn flow_label_status(label: i64) -> FlowLabelStatus {
    match label {
        0 => FlowLabelStatus::NoFlow,
        1..=0xF_FFFF => FlowLabelStatus::ValidFlow,
        _ => FlowLabelStatus::OutOfRange,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DscpPool {
    /// `xxxxx0`, 32 codepoints for standards action.
    Pool1Standard,
    /// `xxxx11`, 16 codepoints for experimental or local use.
    Pool2ExpLocal,
    /// `xxxx01`, 16 experimental/local codepoints that double as overflow for pool 1.
    Pool3ExpLocalOverflow,
}

pub fn dscp_pool(dscp: u8) -> Result<DscpPool, ModelError> {
    if dscp > DSCP_MAX {
        return Err(ModelError::InvalidArgument(format!("dscp {dscp} exceeds 6 bits")));
    }
    Ok(match dscp & 0b11 {
        0b00 | 0b10 => DscpPool::Pool1Standard,
        0b11 => DscpPool::Pool2ExpLocal,
        _ => DscpPool::Pool3ExpLocalOverflow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrioritySemantics {
    CongestionControlled,
    RealTimeDropPriority,
}

pub fn legacy_priority_semantics(p: u8) -> Result<PrioritySemantics, ModelError> {
    match p {
        0..=7 => Ok(PrioritySemantics::CongestionControlled),
        8..=15 => Ok(PrioritySemantics::RealTimeDropPriority),
        _ => Err(ModelError::InvalidArgument(format!("priority {p} exceeds 4 bits"))),
    }
}

/// Router Alert option value carried in a Hop-by-Hop extension header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RouterAlertKind {
    MulticastListenerDiscovery,
    Rsvp,
    ActiveNetwork,
    Reserved(u16),
}

impl From<u16> for RouterAlertKind {
    fn from(v: u16) -> Self {
        match v {
            0 => RouterAlertKind::MulticastListenerDiscovery,
            1 => RouterAlertKind::Rsvp,
            2 => RouterAlertKind::ActiveNetwork,
            other => RouterAlertKind::Reserved(other),
        }
    }
}

impl From<RouterAlertKind> for u16 {
    fn from(k: RouterAlertKind) -> u16 {
        match k {
            RouterAlertKind::MulticastListenerDiscovery => 0,
            RouterAlertKind::Rsvp => 1,
            RouterAlertKind::ActiveNetwork => 2,
            RouterAlertKind::Reserved(v) => v,
        }
    }
}
