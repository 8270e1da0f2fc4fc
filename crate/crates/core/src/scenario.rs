//! Declarative run configuration and the three built-in scenarios.
//!
//! A [`ScenarioConfig`] round-trips through TOML. Keys: `run.*`,
//! `topology.nodes`, `topology.links`, `sources[]`, `scheduler.*`, `rsvp.*`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::TrafficClass;
use crate::pwfq::{PwfqConfig, PwfqRule, DEFAULT_BASE_SLICE_S};
use crate::rsvp::RsvpConfig;
use crate::sched::{
    self, Classifier, QueueConfig, Scheduler, DEFAULT_CAPACITY, DEFAULT_CQ_QUANTUM_BYTES,
    DEFAULT_WFQ_BASE_QUANTUM_BYTES,
};
use crate::traffic::{SourceSpec, TrafficModel};

pub const DEFAULT_DURATION_S: f64 = 120.0;
pub const DEFAULT_BUCKET_S: f64 = 1.0;
pub const DEFAULT_PROPAGATION_S: f64 = 0.001;
pub const ACCESS_RATE_BPS: u64 = 100_000_000;
pub const SCENARIO1_BOTTLENECK_BPS: u64 = 56_000;
pub const SCENARIO2_BOTTLENECK_BPS: u64 = 1_544_000;
pub const SCENARIO3_BOTTLENECK_BPS: u64 = 1_000_000;

/// Scenario 1 flow counts.
pub const SCENARIO1_VOICE_FLOWS: usize = 1;
pub const SCENARIO1_VIDEO_FLOWS: usize = 1;
pub const SCENARIO1_DATA_FLOWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Fifo,
    Pq,
    Cq,
    CqLlq,
    Wfq,
    WfqLlq,
    PwfqRr,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 7] = [
        SchedulerKind::Fifo,
        SchedulerKind::Pq,
        SchedulerKind::Cq,
        SchedulerKind::CqLlq,
        SchedulerKind::Wfq,
        SchedulerKind::WfqLlq,
        SchedulerKind::PwfqRr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Pq => "pq",
            SchedulerKind::Cq => "cq",
            SchedulerKind::CqLlq => "cq_llq",
            SchedulerKind::Wfq => "wfq",
            SchedulerKind::WfqLlq => "wfq_llq",
            SchedulerKind::PwfqRr => "pwfq_rr",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ConfigError::invalid(format!("unknown scheduler `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Switch,
    Router,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

/// Full-duplex link; each direction has its own egress queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub rate_bps: u64,
    #[serde(default = "default_propagation")]
    pub propagation_s: f64,
}

fn default_propagation() -> f64 {
    DEFAULT_PROPAGATION_S
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

impl TopologySpec {
    fn node(&mut self, name: &str, kind: NodeKind) {
        self.nodes.push(NodeSpec { name: name.to_string(), kind });
    }

    fn link(&mut self, a: &str, b: &str, rate_bps: u64) {
        self.links.push(LinkSpec {
            a: a.to_string(),
            b: b.to_string(),
            rate_bps,
            propagation_s: DEFAULT_PROPAGATION_S,
        });
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    /// Scenario number the config was derived from; informational.
    #[serde(default)]
    pub scenario: u32,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_bucket")]
    pub bucket_s: f64,
}

fn default_bucket() -> f64 {
    DEFAULT_BUCKET_S
}

/// Egress discipline applied at every router interface. Hosts and switches
/// use plain FIFOs of `edge_capacity` packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    /// FIFO buffer in packets; defaults to `capacity` times the number of
    /// classifier queues so every discipline gets the same buffer memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fifo_capacity: Option<usize>,
    pub classifier: Classifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_cq_quantum")]
    pub cq_quantum_bytes: f64,
    #[serde(default = "default_wfq_quantum")]
    pub wfq_quantum_bytes: f64,
    #[serde(default = "default_llq_precedences")]
    pub llq_precedences: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pwfq: Option<PwfqConfig>,
    #[serde(default = "default_edge_capacity")]
    pub edge_capacity: usize,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

fn default_cq_quantum() -> f64 {
    DEFAULT_CQ_QUANTUM_BYTES
}

fn default_wfq_quantum() -> f64 {
    DEFAULT_WFQ_BASE_QUANTUM_BYTES
}

fn default_llq_precedences() -> Vec<u8> {
    vec![5, 6, 7]
}

fn default_edge_capacity() -> usize {
    1024
}

impl SchedulerSpec {
    pub fn new(kind: SchedulerKind, classifier: Classifier, pwfq: PwfqConfig) -> Self {
        Self {
            kind,
            capacity: DEFAULT_CAPACITY,
            fifo_capacity: None,
            classifier,
            weights: None,
            cq_quantum_bytes: DEFAULT_CQ_QUANTUM_BYTES,
            wfq_quantum_bytes: DEFAULT_WFQ_BASE_QUANTUM_BYTES,
            llq_precedences: default_llq_precedences(),
            pwfq: Some(pwfq),
            edge_capacity: default_edge_capacity(),
        }
    }

    fn queue_config(&self, quantum: f64) -> QueueConfig {
        QueueConfig {
            capacity: self.capacity,
            classifier: self.classifier.clone(),
            weights: self.weights.clone(),
            quantum_bytes: quantum,
        }
    }

    pub fn fifo_capacity(&self) -> usize {
        self.fifo_capacity.unwrap_or(self.capacity * self.classifier.queue_count())
    }

    /// Instantiates the router egress discipline for a link of `rate_bps`.
    pub fn build(&self, rate_bps: u64) -> Result<Box<dyn Scheduler>, ConfigError> {
        let cq_cfg = self.queue_config(self.cq_quantum_bytes);
        let wfq_cfg = self.queue_config(self.wfq_quantum_bytes);
        Ok(match self.kind {
            SchedulerKind::Fifo => {
                Box::new(sched::fifo(&QueueConfig { capacity: self.fifo_capacity(), ..cq_cfg })?)
            }
            SchedulerKind::Pq => Box::new(sched::pq(&cq_cfg)?),
            SchedulerKind::Cq => Box::new(sched::cq(&cq_cfg)?),
            SchedulerKind::CqLlq => Box::new(sched::with_llq(sched::cq(&cq_cfg)?, &self.llq_precedences, self.capacity)?),
            SchedulerKind::Wfq => Box::new(sched::wfq(&wfq_cfg)?),
            SchedulerKind::WfqLlq => {
                Box::new(sched::with_llq(sched::wfq(&wfq_cfg)?, &self.llq_precedences, self.capacity)?)
            }
            SchedulerKind::PwfqRr => {
                let cfg = self
                    .pwfq
                    .as_ref()
                    .ok_or_else(|| ConfigError::invalid("scheduler.pwfq is required for pwfq_rr"))?;
                Box::new(crate::pwfq::pwfq_rr(cfg, rate_bps)?)
            }
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.edge_capacity == 0 {
            return Err(ConfigError::invalid("edge_capacity must be positive"));
        }
        self.build(1_000_000).map(|_| ())
    }
}

/// Reservation requested for the named source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsvpRequest {
    pub source: String,
    pub rate_bps: u64,
    /// Defaults to `bucket_depth_pkts` times the source's largest packet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RsvpSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(flatten)]
    pub params: RsvpConfig,
    #[serde(default)]
    pub requests: Vec<RsvpRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub run: RunSpec,
    pub topology: TopologySpec,
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub rsvp: RsvpSpec,
    pub sources: Vec<SourceSpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Structural checks; reachability is checked when the network is built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.run.duration_s.is_finite() && self.run.duration_s > 0.0) {
            return Err(ConfigError::invalid("run.duration_s must be positive"));
        }
        if !(self.run.bucket_s.is_finite() && self.run.bucket_s > 0.0) {
            return Err(ConfigError::invalid("run.bucket_s must be positive"));
        }
        self.scheduler.validate()?;
        self.rsvp.params.validate()?;
        for s in &self.sources {
            s.validate()?;
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i].iter().any(|o| o.name == s.name) {
                return Err(ConfigError::invalid(format!("duplicate source name `{}`", s.name)));
            }
        }
        for r in &self.rsvp.requests {
            if !self.sources.iter().any(|s| s.name == r.source) {
                return Err(ConfigError::invalid(format!("rsvp request for unknown source `{}`", r.source)));
            }
            if r.rate_bps == 0 {
                return Err(ConfigError::invalid("rsvp request rate must be positive"));
            }
        }
        Ok(())
    }

    /// Sets the run length, moving source stop times that sat at the old
    /// horizon along with it.
    pub fn set_duration(&mut self, duration_s: f64) {
        let old = self.run.duration_s;
        for s in &mut self.sources {
            if s.stop_s >= old {
                s.stop_s = duration_s;
            }
        }
        self.run.duration_s = duration_s;
    }

    /// Rate of the slowest link between two routers.
    pub fn bottleneck_rate_bps(&self) -> Option<u64> {
        let router = |n: &str| self.topology.nodes.iter().any(|x| x.name == n && x.kind == NodeKind::Router);
        self.topology.links.iter().filter(|l| router(&l.a) && router(&l.b)).map(|l| l.rate_bps).min()
    }

    pub fn hosts(&self) -> impl Iterator<Item = &NodeSpec> {
        self.topology.nodes.iter().filter(|n| n.kind == NodeKind::Host)
    }
}

/// CLI-level overrides applied on top of a built or loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub scheduler: Option<SchedulerKind>,
    pub rsvp: Option<bool>,
    pub bucket_s: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(d) = self.duration_s {
            cfg.set_duration(d);
        }
        if let Some(k) = self.scheduler {
            cfg.scheduler.kind = k;
        }
        if let Some(r) = self.rsvp {
            cfg.rsvp.enabled = r;
        }
        if let Some(b) = self.bucket_s {
            cfg.run.bucket_s = b;
        }
    }
}

/// Disciplines compared in each scenario.
pub fn scenario_schedulers(n: u32) -> &'static [SchedulerKind] {
    const S1: [SchedulerKind; 4] = [SchedulerKind::Fifo, SchedulerKind::Pq, SchedulerKind::Wfq, SchedulerKind::PwfqRr];
    match n {
        1 => &S1,
        _ => &SchedulerKind::ALL,
    }
}

fn rule(precedences: &[u8], i: usize, j: usize) -> PwfqRule {
    PwfqRule { precedences: precedences.to_vec(), queue: [i, j] }
}

/// Voice and video share the first top-level queue, everything else the
/// second.
fn two_level_pwfq() -> PwfqConfig {
    PwfqConfig {
        weights: vec![3.0, 1.0],
        priorities: vec![vec![2.0, 1.0], vec![1.0]],
        base_slice_s: DEFAULT_BASE_SLICE_S,
        classifier: vec![rule(&[7, 6, 5], 0, 0), rule(&[4], 0, 1), rule(&[3, 2, 1, 0], 1, 0)],
        capacity: DEFAULT_CAPACITY,
    }
}

fn three_level_pwfq() -> PwfqConfig {
    PwfqConfig {
        weights: vec![3.0, 2.0, 1.0],
        priorities: vec![vec![2.0, 1.0], vec![1.0], vec![1.0]],
        base_slice_s: DEFAULT_BASE_SLICE_S,
        classifier: vec![rule(&[7, 6, 5], 0, 0), rule(&[4], 0, 1), rule(&[3], 1, 0), rule(&[2, 1, 0], 2, 0)],
        capacity: DEFAULT_CAPACITY,
    }
}

/// `n` hosts on each side of two routers joined by a `rate_bps` link; each
/// side's hosts hang off a switch.
fn dumbbell(servers: &[String], clients: &[String], rate_bps: u64) -> TopologySpec {
    let mut t = TopologySpec::default();
    for h in servers.iter().chain(clients) {
        t.node(h, NodeKind::Host);
    }
    t.node("sw_s", NodeKind::Switch);
    t.node("sw_c", NodeKind::Switch);
    t.node("r1", NodeKind::Router);
    t.node("r2", NodeKind::Router);
    for h in servers {
        t.link(h, "sw_s", ACCESS_RATE_BPS);
    }
    t.link("sw_s", "r1", ACCESS_RATE_BPS);
    t.link("r1", "r2", rate_bps);
    t.link("r2", "sw_c", ACCESS_RATE_BPS);
    for h in clients {
        t.link("sw_c", h, ACCESS_RATE_BPS);
    }
    t
}

struct FlowPlan {
    name: String,
    model: TrafficModel,
    dscp: Option<u8>,
}

fn flows(prefix: &str, count: usize, model: TrafficModel) -> impl Iterator<Item = FlowPlan> + '_ {
    (0..count).map(move |i| FlowPlan { name: format!("{prefix}{i}"), model: model.clone(), dscp: None })
}

fn assemble(
    scenario: u32,
    rate_bps: u64,
    plans: Vec<FlowPlan>,
    scheduler: SchedulerSpec,
    rsvp: RsvpSpec,
) -> ScenarioConfig {
    let servers: Vec<String> = plans.iter().map(|p| format!("srv_{}", p.name)).collect();
    let clients: Vec<String> = plans.iter().map(|p| format!("cli_{}", p.name)).collect();
    let topology = dumbbell(&servers, &clients, rate_bps);
    let sources = plans
        .into_iter()
        .zip(servers.iter().zip(&clients))
        .map(|(p, (s, c))| {
            let mut spec = SourceSpec::new(&p.name, p.model, s, c, 0.0, DEFAULT_DURATION_S);
            spec.dscp = p.dscp;
            spec
        })
        .collect();
    ScenarioConfig {
        run: RunSpec { scenario, duration_s: DEFAULT_DURATION_S, seed: 1, bucket_s: DEFAULT_BUCKET_S },
        topology,
        scheduler,
        rsvp,
        sources,
    }
}

fn scenario1() -> ScenarioConfig {
    let plans = flows("voice", SCENARIO1_VOICE_FLOWS, TrafficModel::voice_default())
        .chain(flows("video", SCENARIO1_VIDEO_FLOWS, TrafficModel::video_default()))
        .chain(flows("data", SCENARIO1_DATA_FLOWS, TrafficModel::data_default()))
        .collect();
    let sched = SchedulerSpec::new(SchedulerKind::Fifo, Classifier::three_class(), two_level_pwfq());
    assemble(1, SCENARIO1_BOTTLENECK_BPS, plans, sched, RsvpSpec::default())
}

/// Reserved voice calls competing with best-effort video and data.
pub const SCENARIO2_VOICE_FLOWS: usize = 4;
pub const SCENARIO2_VIDEO_FLOWS: usize = 5;
pub const SCENARIO2_DATA_FLOWS: usize = 2;

fn scenario2() -> ScenarioConfig {
    let plans = flows("voice", SCENARIO2_VOICE_FLOWS, TrafficModel::voice_default())
        .chain(flows("video", SCENARIO2_VIDEO_FLOWS, TrafficModel::video_default()))
        .chain(flows("data", SCENARIO2_DATA_FLOWS, TrafficModel::data_default()))
        .collect();
    let sched = SchedulerSpec::new(SchedulerKind::Fifo, Classifier::three_class(), two_level_pwfq());
    let requests = (0..SCENARIO2_VOICE_FLOWS)
        .map(|i| RsvpRequest { source: format!("voice{i}"), rate_bps: 64_000, burst_bytes: None })
        .collect();
    let rsvp = RsvpSpec { enabled: true, params: RsvpConfig::default(), requests };
    assemble(2, SCENARIO2_BOTTLENECK_BPS, plans, sched, rsvp)
}

fn video(rate_bps: u64) -> TrafficModel {
    match TrafficModel::video_default() {
        TrafficModel::VideoFrames { fps, mtu_bytes, frame_sigma, line_rate_bps, .. } => {
            TrafficModel::VideoFrames { rate_bps, fps, mtu_bytes, frame_sigma, line_rate_bps }
        }
        _ => unreachable!(),
    }
}

/// Four video flows marked EF, AF41, AF31 and AF21.
fn scenario3() -> ScenarioConfig {
    let plans = [("video_ef", 100_000, 46), ("video_af41", 700_000, 34), ("video_af31", 100_000, 26), ("video_af21", 350_000, 18)]
        .into_iter()
        .map(|(name, rate, dscp)| FlowPlan { name: name.to_string(), model: video(rate), dscp: Some(dscp) })
        .collect();
    let classifier =
        Classifier::new(vec![vec![7, 6, 5], vec![4], vec![3], vec![2], vec![1, 0]]).expect("static classifier");
    let sched = SchedulerSpec::new(SchedulerKind::Fifo, classifier, three_level_pwfq());
    assemble(3, SCENARIO3_BOTTLENECK_BPS, plans, sched, RsvpSpec::default())
}

/// Builds scenario `n` with `overrides` applied.
pub fn build_scenario(n: u32, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = match n {
        1 => scenario1(),
        2 => scenario2(),
        3 => scenario3(),
        other => return Err(ConfigError::UnknownScenario(other)),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Class of every source, in config order.
pub fn source_classes(cfg: &ScenarioConfig) -> Vec<TrafficClass> {
    cfg.sources.iter().map(SourceSpec::class).collect()
}
