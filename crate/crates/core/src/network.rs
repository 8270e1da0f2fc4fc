//! Topology, static routing and the event-driven packet simulation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::des::{EventKind, Kernel, Tagged};
use crate::error::{ConfigError, SimError};
use crate::metrics::{Fate, PacketRecord};
use crate::model::{transmission_time, FlowId, NodeId, Packet, SimTime, TrafficClass};
use crate::rsvp::{Hop, PathMsg, ReservedService, RsvpDomain, SignalEvent, TrafficSpec};
use crate::scenario::{NodeKind, ScenarioConfig};
use crate::sched::{Backlog, DropReason, EnqueueOutcome, Fifo, Scheduler};
use crate::traffic::Source;

enum Egress {
    Plain(Box<dyn Scheduler>),
    Reserved(ReservedService<Box<dyn Scheduler>>),
}

impl Egress {
    fn sched(&mut self) -> &mut dyn Scheduler {
        match self {
            Egress::Plain(s) => s.as_mut(),
            Egress::Reserved(s) => s,
        }
    }

    fn backlog(&self) -> Backlog {
        match self {
            Egress::Plain(s) => s.backlog(),
            Egress::Reserved(s) => s.backlog(),
        }
    }
}

/// One direction of a link with its egress queue.
struct Port {
    from: NodeId,
    to: NodeId,
    rate_bps: u64,
    propagation: SimTime,
    label: String,
    egress: Egress,
    busy: bool,
}

/// Loop-free static forwarding over a fixed topology.
#[derive(Debug, Clone)]
pub struct Topology {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    /// `(from, to, rate_bps, propagation_s)` per directed port.
    ports: Vec<(NodeId, NodeId, u64, f64)>,
    /// `routes[node][dst]` is the port toward `dst`.
    routes: Vec<Vec<Option<usize>>>,
}

impl Topology {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        let names: Vec<String> = cfg.topology.nodes.iter().map(|n| n.name.clone()).collect();
        let kinds: Vec<NodeKind> = cfg.topology.nodes.iter().map(|n| n.kind).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ConfigError::invalid(format!("duplicate node `{n}`")));
            }
        }
        let id = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .map(|i| NodeId(i as u32))
                .ok_or_else(|| ConfigError::UnknownNode(name.to_string()))
        };
        let mut ports = Vec::new();
        let mut seen = BTreeSet::new();
        for l in &cfg.topology.links {
            let (a, b) = (id(&l.a)?, id(&l.b)?);
            if a == b {
                return Err(ConfigError::invalid(format!("link from `{}` to itself", l.a)));
            }
            if l.rate_bps == 0 {
                return Err(ConfigError::invalid(format!("link {}-{} has zero rate", l.a, l.b)));
            }
            if !(l.propagation_s.is_finite() && l.propagation_s >= 0.0) {
                return Err(ConfigError::invalid(format!("link {}-{} has bad propagation delay", l.a, l.b)));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(ConfigError::invalid(format!("duplicate link {}-{}", l.a, l.b)));
            }
            ports.push((a, b, l.rate_bps, l.propagation_s));
            ports.push((b, a, l.rate_bps, l.propagation_s));
        }
        let n = names.len();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (p, &(from, _, _, _)) in ports.iter().enumerate() {
            out[from.0 as usize].push(p);
        }
        let mut routes = vec![vec![None; n]; n];
        // Reverse BFS from each destination; hosts never relay.
        for d in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[d] = 0;
            let mut queue = VecDeque::from([d]);
            while let Some(u) = queue.pop_front() {
                if u != d && kinds[u] == NodeKind::Host {
                    continue;
                }
                for &p in &out[u] {
                    let v = ports[p].1 .0 as usize;
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        // the reverse port v -> u
                        routes[v][d] = Some(p ^ 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        let topo = Self { names, kinds, ports, routes };
        topo.check_loop_free()?;
        for s in &cfg.sources {
            let lookup = |n: &str| topo.node(n).ok_or_else(|| ConfigError::UnknownNode(n.to_string()));
            let (a, b) = (lookup(&s.src)?, lookup(&s.dst)?);
            for end in [a, b] {
                if topo.kinds[end.0 as usize] != NodeKind::Host {
                    return Err(ConfigError::invalid(format!(
                        "source `{}` endpoint `{}` is not a host",
                        s.name,
                        topo.name(end)
                    )));
                }
            }
            if a == b || topo.path(a, b).is_none() {
                return Err(ConfigError::Unreachable { from: s.src.clone(), to: s.dst.clone() });
            }
        }
        Ok(topo)
    }

    fn check_loop_free(&self) -> Result<(), ConfigError> {
        let n = self.names.len();
        for d in 0..n {
            for start in 0..n {
                let mut at = start;
                let mut steps = 0;
                while at != d {
                    let Some(p) = self.routes[at][d] else { break };
                    at = self.ports[p].1 .0 as usize;
                    steps += 1;
                    if steps > n {
                        return Err(ConfigError::invalid(format!(
                            "forwarding loop toward `{}`",
                            self.names[d]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(|i| NodeId(i as u32))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kinds[id.0 as usize]
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn next_hop(&self, at: NodeId, dst: NodeId) -> Option<NodeId> {
        self.routes[at.0 as usize].get(dst.0 as usize).copied().flatten().map(|p| self.ports[p].1)
    }

    /// Port indices from `src` to `dst`, `None` if unreachable.
    fn path(&self, src: NodeId, dst: NodeId) -> Option<Vec<usize>> {
        let mut at = src;
        let mut out = Vec::new();
        while at != dst {
            let p = self.routes[at.0 as usize].get(dst.0 as usize).copied().flatten()?;
            out.push(p);
            at = self.ports[p].1;
        }
        Some(out)
    }

    /// `(rate_bps, propagation_s)` of each hop from `src` to `dst`.
    pub fn hops(&self, src: NodeId, dst: NodeId) -> Option<Vec<(u64, f64)>> {
        Some(self.path(src, dst)?.into_iter().map(|p| (self.ports[p].2, self.ports[p].3)).collect())
    }

    /// Router hops on the forwarding path, for signaling.
    pub fn router_hops(&self, src: NodeId, dst: NodeId) -> Option<Vec<Hop>> {
        Some(
            self.path(src, dst)?
                .into_iter()
                .map(|p| (self.ports[p].0, self.ports[p].1))
                .filter(|(from, _)| self.kind(*from) == NodeKind::Router)
                .map(|(router, next_hop)| Hop { router, next_hop })
                .collect(),
        )
    }
}

/// Sum over hops of transmission plus propagation delay for one packet.
pub fn unloaded_delay(hops: &[(u64, f64)], size_bits: u64) -> f64 {
    hops.iter().map(|&(rate, prop)| size_bits as f64 / rate as f64 + prop).sum()
}

enum Ev {
    Emit(usize),
    Arrive { node: NodeId, pkt: Box<Packet> },
    TxDone { port: usize, pkt: Box<Packet> },
    Refresh(usize),
    Expire,
    End,
}

impl Tagged for Ev {
    fn kind(&self) -> EventKind {
        match self {
            Ev::Emit(_) => EventKind::SourceEmit,
            Ev::Arrive { .. } => EventKind::PacketArrival,
            Ev::TxDone { .. } => EventKind::TransmissionComplete,
            Ev::Refresh(_) | Ev::Expire => EventKind::SignalingTimer,
            Ev::End => EventKind::SimEnd,
        }
    }
}

struct Reservation {
    source: usize,
    route: Vec<Hop>,
    tspec: TrafficSpec,
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheduler: String,
    pub records: Vec<PacketRecord>,
    pub offered: BTreeMap<TrafficClass, u64>,
    pub emitted: u64,
    pub in_flight: u64,
    pub events: u64,
    pub trace_digest: u64,
    pub signaling: Vec<SignalEvent>,
    /// Per-flow hop list, for delay lower bounds.
    pub paths: BTreeMap<FlowId, Vec<(u64, f64)>>,
}

impl RunResult {
    pub fn delivered(&self) -> impl Iterator<Item = &PacketRecord> {
        self.records.iter().filter(|r| matches!(r.fate, Fate::Delivered { .. }))
    }

    pub fn dropped(&self) -> impl Iterator<Item = &PacketRecord> {
        self.records.iter().filter(|r| matches!(r.fate, Fate::Dropped { .. }))
    }

    pub fn delivered_of(&self, class: TrafficClass) -> u64 {
        self.delivered().filter(|r| r.class == class).count() as u64
    }

    pub fn mean_delay(&self, class: TrafficClass) -> f64 {
        let d: Vec<f64> = self.delivered().filter(|r| r.class == class).filter_map(PacketRecord::delay).collect();
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Flow, rate in bits per second and bucket depth in bytes.
type Policer = (FlowId, u64, u64);

struct Sim<'a> {
    topo: Topology,
    ports: Vec<Port>,
    sources: Vec<Source>,
    records: Vec<PacketRecord>,
    offered: BTreeMap<TrafficClass, u64>,
    emitted: u64,
    in_propagation: u64,
    domain: Option<RsvpDomain>,
    reservations: Vec<Reservation>,
    cfg: &'a ScenarioConfig,
}

impl Sim<'_> {
    fn drop_packet(&mut self, pkt: Packet, at: SimTime, site: String, reason: DropReason) {
        self.records.push(PacketRecord {
            id: pkt.id,
            flow_id: pkt.flow_id,
            class: pkt.class,
            size_bits: pkt.size_bits(),
            created_at: pkt.created_at,
            fate: Fate::Dropped { at, site, reason },
        });
    }

    fn forward(&mut self, k: &mut Kernel<Ev>, mut pkt: Packet, node: NodeId) -> Result<(), SimError> {
        let now = k.now();
        if pkt.dst == node {
            pkt.mark_delivered(now)?;
            self.records.push(PacketRecord {
                id: pkt.id,
                flow_id: pkt.flow_id,
                class: pkt.class,
                size_bits: pkt.size_bits(),
                created_at: pkt.created_at,
                fate: Fate::Delivered { at: now },
            });
            return Ok(());
        }
        let Some(p) = self.topo.routes[node.0 as usize].get(pkt.dst.0 as usize).copied().flatten() else {
            let site = self.topo.name(node).to_string();
            self.drop_packet(pkt, now, site, DropReason::NoRoute);
            return Ok(());
        };
        if let EnqueueOutcome::Dropped(pkt, reason) = self.ports[p].egress.sched().enqueue(pkt, now) {
            let site = self.ports[p].label.clone();
            self.drop_packet(*pkt, now, site, reason);
        }
        if !self.ports[p].busy {
            self.start(k, p)?;
        }
        Ok(())
    }

    fn start(&mut self, k: &mut Kernel<Ev>, p: usize) -> Result<(), SimError> {
        let port = &mut self.ports[p];
        debug_assert!(!port.busy);
        if let Some(pkt) = port.egress.sched().dequeue(k.now()) {
            let tx = transmission_time(pkt.size_bits(), port.rate_bps)?;
            port.busy = true;
            k.schedule_in(tx, Ev::TxDone { port: p, pkt: Box::new(pkt) })?;
        }
        Ok(())
    }

    fn handle(&mut self, k: &mut Kernel<Ev>, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Emit(i) => {
                let (pkt, next) = self.sources[i].next_emission(k.now());
                self.emitted += 1;
                *self.offered.entry(pkt.class).or_default() += 1;
                let src = self.sources[i].src();
                if let Some(t) = next {
                    k.schedule(t, Ev::Emit(i))?;
                }
                self.forward(k, pkt, src)?;
            }
            Ev::Arrive { node, pkt } => {
                self.in_propagation -= 1;
                self.forward(k, *pkt, node)?;
            }
            Ev::TxDone { port, pkt } => {
                let (to, prop) = (self.ports[port].to, self.ports[port].propagation);
                self.ports[port].busy = false;
                self.in_propagation += 1;
                k.schedule_in(prop, Ev::Arrive { node: to, pkt })?;
                self.start(k, port)?;
            }
            Ev::Refresh(r) => self.refresh(k, r)?,
            Ev::Expire => {
                if let Some(d) = self.domain.as_mut() {
                    d.expire(k.now());
                }
                self.sync_policers();
            }
            Ev::End => {}
        }
        Ok(())
    }

    fn refresh(&mut self, k: &mut Kernel<Ev>, r: usize) -> Result<(), SimError> {
        let now = k.now();
        let res = &self.reservations[r];
        let src = &self.sources[res.source];
        let msg = PathMsg::new(src.flow_id(), res.tspec, src.src(), src.dst())?;
        let stop = src.spec().stop_s;
        let domain = self.domain.as_mut().expect("reservations imply a domain");
        domain.signal(msg, Some(&res.route), now);
        let period = domain.config().refresh_period_s;
        let timeout = SimTime::from_secs(domain.config().timeout_s())?;
        k.schedule(now + timeout, Ev::Expire)?;
        let next = now.secs() + period;
        if next < stop {
            k.schedule(SimTime::from_secs(next)?, Ev::Refresh(r))?;
        }
        self.sync_policers();
        Ok(())
    }

    /// Installs policers exactly for flows established end to end.
    fn sync_policers(&mut self) {
        let Some(domain) = self.domain.as_ref() else { return };
        let mut want: BTreeMap<(NodeId, NodeId), Vec<Policer>> = BTreeMap::new();
        for (flow, s) in domain.sessions() {
            if domain.is_established(*flow) {
                for h in &s.hops {
                    want.entry((h.router, h.next_hop)).or_default().push((*flow, s.rate_bps, s.burst_bytes));
                }
            }
        }
        for port in &mut self.ports {
            let Egress::Reserved(svc) = &mut port.egress else { continue };
            let flows = want.remove(&(port.from, port.to)).unwrap_or_default();
            let stale: Vec<FlowId> = svc.reserved_flows().filter(|f| !flows.iter().any(|x| x.0 == *f)).collect();
            for f in stale {
                svc.remove(f);
            }
            for (f, rate, burst) in flows {
                svc.install(f, rate, burst);
            }
        }
    }

    fn in_network(&self) -> u64 {
        let queued: usize = self.ports.iter().map(|p| p.egress.backlog().packets() + p.busy as usize).sum();
        queued as u64 + self.in_propagation
    }
}

/// Runs `cfg` to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, SimError> {
    cfg.validate()?;
    let topo = Topology::build(cfg)?;
    let rsvp_on = cfg.rsvp.enabled && !cfg.rsvp.requests.is_empty();
    let mut ports = Vec::new();
    for &(from, to, rate_bps, prop) in &topo.ports {
        let router = topo.kind(from) == NodeKind::Router;
        let sched: Box<dyn Scheduler> = if router {
            cfg.scheduler.build(rate_bps)?
        } else {
            Box::new(Fifo::new(cfg.scheduler.edge_capacity))
        };
        let egress = if router && rsvp_on {
            Egress::Reserved(ReservedService::new(sched, cfg.scheduler.capacity))
        } else {
            Egress::Plain(sched)
        };
        ports.push(Port {
            from,
            to,
            rate_bps,
            propagation: SimTime::from_secs(prop).map_err(ConfigError::from)?,
            label: format!("{}-{}", topo.name(from), topo.name(to)),
            egress,
            busy: false,
        });
    }

    let mut sources = Vec::new();
    let mut paths = BTreeMap::new();
    for (i, spec) in cfg.sources.iter().enumerate() {
        let (src, dst) = (topo.node(&spec.src).expect("checked"), topo.node(&spec.dst).expect("checked"));
        let s = Source::new(i as u32, spec, src, dst, cfg.run.seed)?;
        paths.insert(s.flow_id(), topo.hops(src, dst).expect("checked"));
        sources.push(s);
    }

    let mut domain = None;
    let mut reservations = Vec::new();
    if rsvp_on {
        let mut d = RsvpDomain::new(cfg.rsvp.params.clone())?;
        for p in &ports {
            if topo.kind(p.from) == NodeKind::Router {
                d.add_interface(p.from, p.to, p.rate_bps);
            }
        }
        for req in &cfg.rsvp.requests {
            let source = cfg.sources.iter().position(|s| s.name == req.source).expect("validated");
            let s = &sources[source];
            let burst = req.burst_bytes.unwrap_or_else(|| {
                (cfg.rsvp.params.bucket_depth_pkts * s.spec().model.max_packet_bytes() as f64).round() as u64
            });
            reservations.push(Reservation {
                source,
                route: topo.router_hops(s.src(), s.dst()).expect("checked"),
                tspec: TrafficSpec { rate_bps: req.rate_bps, burst_bytes: burst },
            });
        }
        domain = Some(d);
    }

    let end = SimTime::from_secs(cfg.run.duration_s).map_err(ConfigError::from)?;
    let mut k: Kernel<Ev> = Kernel::new();
    for (r, res) in reservations.iter().enumerate() {
        let start = SimTime::from_secs(cfg.sources[res.source].start_s).map_err(ConfigError::from)?;
        k.schedule(start, Ev::Refresh(r))?;
    }
    for (i, s) in sources.iter_mut().enumerate() {
        if let Some(t) = s.first_emission() {
            k.schedule(t, Ev::Emit(i))?;
        }
    }
    k.schedule(end, Ev::End)?;

    let scheduler = cfg.scheduler.kind.as_str().to_string();
    let mut sim = Sim {
        topo,
        ports,
        sources,
        records: Vec::new(),
        offered: TrafficClass::ALL.iter().map(|c| (*c, 0)).collect(),
        emitted: 0,
        in_propagation: 0,
        domain,
        reservations,
        cfg,
    };
    let summary = k.run_until(end, |k, ev| sim.handle(k, ev.payload))?;

    let in_flight = sim.in_network();
    let finished = sim.records.len() as u64;
    if sim.emitted != finished + in_flight {
        return Err(SimError::Invariant(format!(
            "packet conservation: emitted {} != recorded {finished} + in flight {in_flight}",
            sim.emitted
        )));
    }
    let _ = sim.cfg;
    Ok(RunResult {
        scheduler,
        records: sim.records,
        offered: sim.offered,
        emitted: sim.emitted,
        in_flight,
        events: summary.events_processed,
        trace_digest: k.trace_digest(),
        signaling: sim.domain.map(|d| d.log().to_vec()).unwrap_or_default(),
        paths,
    })
}
