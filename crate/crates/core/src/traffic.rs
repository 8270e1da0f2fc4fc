//! Seeded voice, video and data sources.
//!
//! All flows are open loop. Packet sizes are full on-wire sizes; header
//! overhead is folded into the configured payload sizes.

use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::des::RandomStream;
use crate::error::ConfigError;
use crate::model::{FlowId, Ipv6Marking, NodeId, Packet, PacketId, SimTime, TrafficClass};

pub const DEFAULT_LINE_RATE_BPS: u64 = 100_000_000;

fn default_line_rate() -> u64 {
    DEFAULT_LINE_RATE_BPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficModel {
    /// Fixed-size packets at a fixed interval.
    VoiceCbr { rate_bps: u64, packet_bytes: u32 },
    /// One frame per `1/fps`, fragmented at `mtu_bytes` and sent back to
    /// back at `line_rate_bps`. `frame_sigma > 0` draws lognormal frame
    /// sizes with the same mean.
    VideoFrames {
        rate_bps: u64,
        fps: f64,
        mtu_bytes: u32,
        #[serde(default)]
        frame_sigma: f64,
        #[serde(default = "default_line_rate")]
        line_rate_bps: u64,
    },
    /// Exponential on/off periods with Poisson arrivals at `peak_rate_bps`
    /// while on.
    DataOnOff { peak_rate_bps: u64, packet_bytes: u32, mean_on_s: f64, mean_off_s: f64 },
}

impl TrafficModel {
    pub fn voice_default() -> Self {
        TrafficModel::VoiceCbr { rate_bps: 64_000, packet_bytes: 200 }
    }

    pub fn video_default() -> Self {
        TrafficModel::VideoFrames {
            rate_bps: 300_000,
            fps: 10.0,
            mtu_bytes: 1500,
            frame_sigma: 0.0,
            line_rate_bps: DEFAULT_LINE_RATE_BPS,
        }
    }

    pub fn data_default() -> Self {
        TrafficModel::DataOnOff { peak_rate_bps: 64_000, packet_bytes: 500, mean_on_s: 1.0, mean_off_s: 2.0 }
    }

    pub fn default_class(&self) -> TrafficClass {
        match self {
            TrafficModel::VoiceCbr { .. } => TrafficClass::Voice,
            TrafficModel::VideoFrames { .. } => TrafficClass::Video,
            TrafficModel::DataOnOff { .. } => TrafficClass::Data,
        }
    }

    /// Long-run mean offered rate.
    pub fn mean_rate_bps(&self) -> f64 {
        match *self {
            TrafficModel::VoiceCbr { rate_bps, .. } => rate_bps as f64,
            TrafficModel::VideoFrames { rate_bps, .. } => rate_bps as f64,
            TrafficModel::DataOnOff { peak_rate_bps, mean_on_s, mean_off_s, .. } => {
                peak_rate_bps as f64 * mean_on_s / (mean_on_s + mean_off_s)
            }
        }
    }

    /// Largest packet the model can emit, in bytes.
    pub fn max_packet_bytes(&self) -> u32 {
        match *self {
            TrafficModel::VoiceCbr { packet_bytes, .. } | TrafficModel::DataOnOff { packet_bytes, .. } => packet_bytes,
            TrafficModel::VideoFrames { mtu_bytes, .. } => mtu_bytes,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(format!("{what} must be positive")))
            }
        };
        match *self {
            TrafficModel::VoiceCbr { rate_bps, packet_bytes } => {
                pos(rate_bps as f64, "rate_bps")?;
                pos(packet_bytes as f64, "packet_bytes")
            }
            TrafficModel::VideoFrames { rate_bps, fps, mtu_bytes, frame_sigma, line_rate_bps } => {
                pos(rate_bps as f64, "rate_bps")?;
                pos(fps, "fps")?;
                pos(mtu_bytes as f64, "mtu_bytes")?;
                pos(line_rate_bps as f64, "line_rate_bps")?;
                if !(frame_sigma.is_finite() && frame_sigma >= 0.0) {
                    return Err(ConfigError::invalid("frame_sigma must be non-negative"));
                }
                Ok(())
            }
            TrafficModel::DataOnOff { peak_rate_bps, packet_bytes, mean_on_s, mean_off_s } => {
                pos(peak_rate_bps as f64, "peak_rate_bps")?;
                pos(packet_bytes as f64, "packet_bytes")?;
                pos(mean_on_s, "mean_on_s")?;
                pos(mean_off_s, "mean_off_s")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    #[serde(flatten)]
    pub model: TrafficModel,
    /// Defaults to the model's natural class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<TrafficClass>,
    /// Overrides the class-selector codepoint implied by the class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dscp: Option<u8>,
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub start_s: f64,
    pub stop_s: f64,
}

impl SourceSpec {
    pub fn new(name: &str, model: TrafficModel, src: &str, dst: &str, start_s: f64, stop_s: f64) -> Self {
        Self {
            name: name.to_string(),
            model,
            class: None,
            dscp: None,
            src: src.to_string(),
            dst: dst.to_string(),
            start_s,
            stop_s,
        }
    }

    pub fn class(&self) -> TrafficClass {
        self.class.unwrap_or_else(|| self.model.default_class())
    }

    pub fn dscp(&self) -> u8 {
        self.dscp.unwrap_or_else(|| self.class().default_dscp())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| ConfigError::invalid(format!("source `{}`: {e}", self.name)))?;
        if !(self.start_s.is_finite() && self.start_s >= 0.0) {
            return Err(ConfigError::invalid(format!("source `{}`: start must be non-negative", self.name)));
        }
        if !(self.stop_s.is_finite() && self.stop_s > self.start_s) {
            return Err(ConfigError::invalid(format!("source `{}`: stop must follow start", self.name)));
        }
        if let Some(d) = self.dscp {
            Ipv6Marking::new(d, 0, 0)?;
        }
        Ok(())
    }
}

#[derive(Debug)]
enum State {
    Voice { interval: f64, first: f64, bits: u64 },
    Video { frame_interval: f64, first: f64, frame: u64, fragments: Vec<u64>, next_fragment: usize },
    Data { bits: u64, arrivals: Exp<f64>, on: Exp<f64>, off: Exp<f64>, on_until: f64 },
}

/// A running traffic source. Emission times are strictly increasing and
/// confined to `[start, stop)`.
#[derive(Debug)]
pub struct Source {
    index: u32,
    spec: SourceSpec,
    src: NodeId,
    dst: NodeId,
    marking: Ipv6Marking,
    class: TrafficClass,
    rng: RandomStream,
    seq: u64,
    state: State,
}

impl Source {
    /// `index` doubles as the flow id; the random substream is keyed by
    /// the source name under `seed`.
    pub fn new(index: u32, spec: &SourceSpec, src: NodeId, dst: NodeId, seed: u64) -> Result<Self, ConfigError> {
        spec.validate()?;
        let class = spec.class();
        let marking = Ipv6Marking::new(spec.dscp(), index + 1, class.legacy_priority())?;
        let mut rng = RandomStream::substream(seed, &spec.name);
        let state = match spec.model {
            TrafficModel::VoiceCbr { rate_bps, packet_bytes } => {
                let bits = packet_bytes as u64 * 8;
                let interval = bits as f64 / rate_bps as f64;
                State::Voice { interval, first: spec.start_s + rng.uniform() * interval, bits }
            }
            TrafficModel::VideoFrames { fps, .. } => {
                let frame_interval = 1.0 / fps;
                State::Video {
                    frame_interval,
                    first: spec.start_s + rng.uniform() * frame_interval,
                    frame: 0,
                    fragments: Vec::new(),
                    next_fragment: 0,
                }
            }
            TrafficModel::DataOnOff { peak_rate_bps, packet_bytes, mean_on_s, mean_off_s } => {
                let bits = packet_bytes as u64 * 8;
                let pps = peak_rate_bps as f64 / bits as f64;
                let exp = |rate: f64| Exp::new(rate).map_err(|e| ConfigError::invalid(e.to_string()));
                let on = exp(1.0 / mean_on_s)?;
                State::Data {
                    bits,
                    arrivals: exp(pps)?,
                    on_until: spec.start_s + on.sample(rng.rng()),
                    on,
                    off: exp(1.0 / mean_off_s)?,
                }
            }
        };
        Ok(Self { index, spec: spec.clone(), src, dst, marking, class, rng, seq: 0, state })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn flow_id(&self) -> FlowId {
        FlowId(self.index)
    }

    pub fn class(&self) -> TrafficClass {
        self.class
    }

    pub fn src(&self) -> NodeId {
        self.src
    }

    pub fn dst(&self) -> NodeId {
        self.dst
    }

    fn stop(&self) -> f64 {
        self.spec.stop_s
    }

    fn within(&self, t: f64) -> Option<SimTime> {
        (t < self.stop()).then(|| SimTime::from_secs(t).expect("source times are non-negative"))
    }

    /// Time of the first emission, `None` if the source never emits.
    pub fn first_emission(&mut self) -> Option<SimTime> {
        let t = match &mut self.state {
            State::Voice { first, .. } | State::Video { first, .. } => *first,
            State::Data { .. } => {
                let start = self.spec.start_s;
                self.next_data_arrival(start)
            }
        };
        self.within(t)
    }

    /// Emits the packet due at `now` and returns the time of the next one.
    pub fn next_emission(&mut self, now: SimTime) -> (Packet, Option<SimTime>) {
        let t = now.secs();
        let (bits, next) = match &mut self.state {
            State::Voice { interval, first, bits } => {
                let k = self.seq + 1;
                (*bits, *first + k as f64 * *interval)
            }
            State::Video { .. } => self.next_video(t),
            State::Data { bits, .. } => {
                let b = *bits;
                (b, self.next_data_arrival(t))
            }
        };
        let pkt = Packet::new(
            PacketId::new(self.index, self.seq),
            self.flow_id(),
            self.src,
            self.dst,
            bits,
            self.marking,
            self.class,
            now,
        )
        .expect("sizes validated positive");
        self.seq += 1;
        // Guard strict monotonicity against degenerate zero-length draws.
        let next = if next > t { next } else { t + 1e-9 };
        (pkt, self.within(next))
    }

    fn next_video(&mut self, now: f64) -> (u64, f64) {
        let TrafficModel::VideoFrames { rate_bps, fps, mtu_bytes, frame_sigma, line_rate_bps } = self.spec.model
        else {
            unreachable!("video state with non-video model")
        };
        let State::Video { frame_interval, first, frame, fragments, next_fragment } = &mut self.state else {
            unreachable!()
        };
        if *next_fragment >= fragments.len() {
            let mean = rate_bps as f64 / 8.0 / fps;
            let bytes = if frame_sigma > 0.0 {
                let mu = mean.ln() - frame_sigma * frame_sigma / 2.0;
                LogNormal::new(mu, frame_sigma).expect("validated sigma").sample(self.rng.rng())
            } else {
                mean
            };
            let bytes = bytes.round().max(1.0) as u64;
            let mtu = mtu_bytes as u64;
            fragments.clear();
            let mut left = bytes;
            while left > 0 {
                let b = left.min(mtu);
                fragments.push(b * 8);
                left -= b;
            }
            *next_fragment = 0;
        }
        let bits = fragments[*next_fragment];
        *next_fragment += 1;
        let next = if *next_fragment < fragments.len() {
            now + bits as f64 / line_rate_bps as f64
        } else {
            *frame += 1;
            *first + *frame as f64 * *frame_interval
        };
        (bits, next)
    }

    /// Next Poisson arrival after `t`, skipping over off periods.
    fn next_data_arrival(&mut self, t: f64) -> f64 {
        let State::Data { arrivals, on, off, on_until, .. } = &mut self.state else {
            unreachable!()
        };
        let rng = self.rng.rng();
        let mut from = t;
        loop {
            let candidate = from + arrivals.sample(rng);
            if candidate < *on_until {
                return candidate;
            }
            let on_start = *on_until + off.sample(rng);
            *on_until = on_start + on.sample(rng);
            from = on_start;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(spec: &SourceSpec, seed: u64) -> Vec<(f64, u64)> {
        let mut s = Source::new(0, spec, NodeId(0), NodeId(1), seed).unwrap();
        let mut out = Vec::new();
        let mut next = s.first_emission();
        while let Some(t) = next {
            let (p, n) = s.next_emission(t);
            out.push((t.secs(), p.size_bits()));
            next = n;
        }
        out
    }

    #[test]
    fn voice_interarrival_is_25ms() {
        let spec = SourceSpec::new("v", TrafficModel::voice_default(), "a", "b", 0.0, 10.0);
        let e = run(&spec, 1);
        for w in e.windows(2) {
            assert!((w[1].0 - w[0].0 - 0.025).abs() < 1e-9);
        }
        assert!(e.iter().all(|x| x.1 == 1600));
        assert_eq!(e.len(), 400);
    }

    #[test]
    fn video_frames_fragment_at_mtu() {
        let model = TrafficModel::VideoFrames {
            rate_bps: 6000 * 8 * 10,
            fps: 10.0,
            mtu_bytes: 1500,
            frame_sigma: 0.0,
            line_rate_bps: DEFAULT_LINE_RATE_BPS,
        };
        let spec = SourceSpec::new("vid", model, "a", "b", 0.0, 1.0);
        let e = run(&spec, 3);
        assert_eq!(e.len(), 40);
        assert!(e.iter().all(|x| x.1 == 1500 * 8));
        for frame in e.chunks(4) {
            let span = frame[3].0 - frame[0].0;
            assert!(span < 0.001, "fragments leave back to back");
        }
        for w in e.chunks(4).collect::<Vec<_>>().windows(2) {
            assert!((w[1][0].0 - w[0][0].0 - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn default_video_frame_has_three_fragments() {
        let spec = SourceSpec::new("vid", TrafficModel::video_default(), "a", "b", 0.0, 0.1);
        let sizes: Vec<u64> = run(&spec, 1).iter().map(|x| x.1 / 8).collect();
        assert_eq!(sizes, vec![1500, 1500, 750]);
    }

    #[test]
    fn same_seed_same_trace() {
        for model in [TrafficModel::voice_default(), TrafficModel::video_default(), TrafficModel::data_default()] {
            let spec = SourceSpec::new("s", model, "a", "b", 0.5, 30.0);
            assert_eq!(run(&spec, 7), run(&spec, 7));
        }
        let data = SourceSpec::new("s", TrafficModel::data_default(), "a", "b", 0.0, 30.0);
        assert_ne!(run(&data, 7), run(&data, 8));
    }

    #[test]
    fn emissions_strictly_increase_and_stay_in_window() {
        for model in [TrafficModel::voice_default(), TrafficModel::video_default(), TrafficModel::data_default()] {
            let spec = SourceSpec::new("s", model, "a", "b", 2.0, 40.0);
            let e = run(&spec, 11);
            assert!(!e.is_empty());
            assert!(e.first().unwrap().0 >= 2.0);
            assert!(e.last().unwrap().0 < 40.0);
            assert!(e.windows(2).all(|w| w[1].0 > w[0].0));
        }
    }

    #[test]
    fn lognormal_frames_vary_around_mean() {
        let model = TrafficModel::VideoFrames {
            rate_bps: 300_000,
            fps: 10.0,
            mtu_bytes: 1500,
            frame_sigma: 0.5,
            line_rate_bps: DEFAULT_LINE_RATE_BPS,
        };
        let spec = SourceSpec::new("v", model, "a", "b", 0.0, 500.0);
        let e = run(&spec, 5);
        let bits: u64 = e.iter().map(|x| x.1).sum();
        let rate = bits as f64 / 500.0;
        assert!((rate / 300_000.0 - 1.0).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SourceSpec::new("v", TrafficModel::voice_default(), "a", "b", 5.0, 5.0);
        assert!(spec.validate().is_err());
        spec.stop_s = 6.0;
        assert!(spec.validate().is_ok());
        spec.model = TrafficModel::VoiceCbr { rate_bps: 0, packet_bytes: 200 };
        assert!(spec.validate().is_err());
        spec.model = TrafficModel::voice_default();
        spec.dscp = Some(64);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn marking_carries_flow_label_and_dscp() {
        let mut spec = SourceSpec::new("v", TrafficModel::video_default(), "a", "b", 0.0, 1.0);
        spec.dscp = Some(34);
        let mut s = Source::new(6, &spec, NodeId(0), NodeId(1), 1).unwrap();
        let t = s.first_emission().unwrap();
        let (p, _) = s.next_emission(t);
        assert_eq!(p.marking.flow_label(), 7);
        assert_eq!(p.precedence(), 4);
        assert_eq!(p.class, TrafficClass::Video);
        assert_eq!(p.flow_id, FlowId(6));
    }
}
