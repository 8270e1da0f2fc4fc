//! Per-packet fate records, derived time series and their CSV forms.
//!
//! Floating-point values are written with 9 significant digits. Series
//! values are quantized to that precision when built, so emitting and
//! parsing a CSV reproduces the series exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::ConfigError;
use crate::model::{FlowId, PacketId, SimTime, TrafficClass};
use crate::sched::DropReason;

#[derive(Debug, Clone, PartialEq)]
pub enum Fate {
    Delivered { at: SimTime },
    Dropped { at: SimTime, site: String, reason: DropReason },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub id: PacketId,
    pub flow_id: FlowId,
    pub class: TrafficClass,
    pub size_bits: u64,
    pub created_at: SimTime,
    pub fate: Fate,
}

impl PacketRecord {
    pub fn delay(&self) -> Option<f64> {
        match self.fate {
            Fate::Delivered { at } => Some(at - self.created_at),
            Fate::Dropped { .. } => None,
        }
    }
}

/// `%.9g`-style formatting; `nan` and `inf` spelled out.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds `x` to the value its 9-digit text parses back to.
pub fn quantize(x: f64) -> f64 {
    parse_num(&fmt_num(x)).expect("formatted numbers parse")
}

pub fn parse_num(s: &str) -> Result<f64, ConfigError> {
    s.parse::<f64>().map_err(|_| ConfigError::Parse(format!("bad number `{s}`")))
}

fn bucket_count(bucket_s: f64, horizon_s: f64) -> usize {
    assert!(bucket_s > 0.0, "bucket width must be positive");
    ((horizon_s / bucket_s).ceil() as usize).max(1)
}

fn bucket_of(t: SimTime, bucket_s: f64, n: usize) -> usize {
    ((t.secs() / bucket_s).floor() as usize).min(n - 1)
}

fn bucket_starts(bucket_s: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| quantize(k as f64 * bucket_s)).collect()
}

/// Drop counts per bucket, broken down by drop site and reason.
#[derive(Debug, Clone, PartialEq)]
pub struct DropSeries {
    pub starts: Vec<f64>,
    pub totals: Vec<u64>,
    pub by_key: BTreeMap<(String, DropReason), Vec<u64>>,
}

impl DropSeries {
    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }
}

/// Buckets cover `[0, horizon_s)`; later drops fall into the last bucket.
pub fn drops_over_time(records: &[PacketRecord], bucket_s: f64, horizon_s: f64) -> DropSeries {
    let n = bucket_count(bucket_s, horizon_s);
    let mut totals = vec![0; n];
    let mut by_key: BTreeMap<(String, DropReason), Vec<u64>> = BTreeMap::new();
    for r in records {
        if let Fate::Dropped { at, site, reason } = &r.fate {
            let k = bucket_of(*at, bucket_s, n);
            totals[k] += 1;
            by_key.entry((site.clone(), *reason)).or_insert_with(|| vec![0; n])[k] += 1;
        }
    }
    DropSeries { starts: bucket_starts(bucket_s, n), totals, by_key }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSeries {
    pub class: TrafficClass,
    pub starts: Vec<f64>,
    pub packets: Vec<u64>,
    pub bits: Vec<u64>,
}

impl ClassSeries {
    pub fn total_packets(&self) -> u64 {
        self.packets.iter().sum()
    }
}

/// Delivered packets and bits of `class` per bucket, keyed by delivery time.
pub fn received_per_class(records: &[PacketRecord], class: TrafficClass, bucket_s: f64, horizon_s: f64) -> ClassSeries {
    let n = bucket_count(bucket_s, horizon_s);
    let mut packets = vec![0; n];
    let mut bits = vec![0; n];
    for r in records.iter().filter(|r| r.class == class) {
        if let Fate::Delivered { at } = r.fate {
            let k = bucket_of(at, bucket_s, n);
            packets[k] += 1;
            bits[k] += r.size_bits;
        }
    }
    ClassSeries { class, starts: bucket_starts(bucket_s, n), packets, bits }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPoint {
    pub delivery_time_s: f64,
    pub class: TrafficClass,
    pub delay_s: f64,
    pub running_mean_s: f64,
}

/// Running mean of end-to-end delay of `class`, one point per delivery in
/// delivery order.
pub fn time_average_delay(records: &[PacketRecord], class: TrafficClass) -> Vec<DelayPoint> {
    let mut delivered: Vec<(SimTime, f64)> = records
        .iter()
        .filter(|r| r.class == class)
        .filter_map(|r| match r.fate {
            Fate::Delivered { at } => Some((at, at - r.created_at)),
            Fate::Dropped { .. } => None,
        })
        .collect();
    delivered.sort_by_key(|d| d.0);
    let mut sum = 0.0;
    delivered
        .iter()
        .enumerate()
        .map(|(k, &(at, d))| {
            sum += d;
            DelayPoint {
                delivery_time_s: quantize(at.secs()),
                class,
                delay_s: quantize(d),
                running_mean_s: quantize(sum / (k + 1) as f64),
            }
        })
        .collect()
}

/// All classes' delay points merged in delivery order; ties keep class order.
pub fn delay_points(records: &[PacketRecord]) -> Vec<DelayPoint> {
    let mut all: Vec<DelayPoint> = TrafficClass::ALL.iter().flat_map(|c| time_average_delay(records, *c)).collect();
    all.sort_by(|a, b| a.delivery_time_s.total_cmp(&b.delivery_time_s));
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheduler: String,
    pub class: TrafficClass,
    pub offered_pkts: u64,
    pub delivered_pkts: u64,
    pub dropped_pkts: u64,
    pub mean_delay_s: f64,
    pub p99_delay_s: f64,
}

/// Nearest-rank percentile of unsorted values; NaN when empty.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// One row per class. `offered` counts emitted packets, including those
/// still in flight at the end of the run.
pub fn summarize(scheduler: &str, records: &[PacketRecord], offered: &BTreeMap<TrafficClass, u64>) -> Vec<SummaryRow> {
    TrafficClass::ALL
        .iter()
        .map(|&class| {
            let of_class = records.iter().filter(|r| r.class == class);
            let delays: Vec<f64> = of_class.clone().filter_map(PacketRecord::delay).collect();
            let dropped = of_class.filter(|r| matches!(r.fate, Fate::Dropped { .. })).count() as u64;
            let mean = if delays.is_empty() { f64::NAN } else { delays.iter().sum::<f64>() / delays.len() as f64 };
            SummaryRow {
                scheduler: scheduler.to_string(),
                class,
                offered_pkts: offered.get(&class).copied().unwrap_or(0),
                delivered_pkts: delays.len() as u64,
                dropped_pkts: dropped,
                mean_delay_s: quantize(mean),
                p99_delay_s: quantize(percentile(&delays, 0.99)),
            }
        })
        .collect()
}

pub const DROPS_HEADER: &str = "time_bucket_start_s,site,reason,count";
pub const DELIVERED_HEADER: &str = "time_bucket_start_s,class,packets,bits";
pub const DELAY_HEADER: &str = "delivery_time_s,class,packet_delay_s,running_mean_s";
pub const SUMMARY_HEADER: &str =
    "scheduler,class,offered_pkts,delivered_pkts,dropped_pkts,mean_delay_s,p99_delay_s";

/// Site and reason `all` rows carry the bucket total.
pub const ALL: &str = "all";

pub fn drops_csv(s: &DropSeries) -> String {
    let mut out = format!("{DROPS_HEADER}\n");
    for (k, start) in s.starts.iter().enumerate() {
        let t = fmt_num(*start);
        writeln!(out, "{t},{ALL},{ALL},{}", s.totals[k]).unwrap();
        for ((site, reason), counts) in &s.by_key {
            writeln!(out, "{t},{site},{reason},{}", counts[k]).unwrap();
        }
    }
    out
}

pub fn delivered_csv(series: &[ClassSeries]) -> String {
    let mut out = format!("{DELIVERED_HEADER}\n");
    let n = series.first().map_or(0, |s| s.starts.len());
    for k in 0..n {
        for s in series {
            writeln!(out, "{},{},{},{}", fmt_num(s.starts[k]), s.class, s.packets[k], s.bits[k]).unwrap();
        }
    }
    out
}

pub fn delay_csv(points: &[DelayPoint]) -> String {
    let mut out = format!("{DELAY_HEADER}\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_num(p.delivery_time_s),
            p.class,
            fmt_num(p.delay_s),
            fmt_num(p.running_mean_s)
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scheduler,
            r.class,
            r.offered_pkts,
            r.delivered_pkts,
            r.dropped_pkts,
            fmt_num(r.mean_delay_s),
            fmt_num(r.p99_delay_s)
        )
        .unwrap();
    }
    out
}

fn rows<'a>(text: &'a str, header: &str, width: usize) -> Result<Vec<Vec<&'a str>>, ConfigError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(ConfigError::Parse(format!("expected header `{header}`")));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == width {
                Ok(f)
            } else {
                Err(ConfigError::Parse(format!("expected {width} fields in `{l}`")))
            }
        })
        .collect()
}

fn parse_u64(s: &str) -> Result<u64, ConfigError> {
    s.parse().map_err(|_| ConfigError::Parse(format!("bad count `{s}`")))
}

fn parse_class(s: &str) -> Result<TrafficClass, ConfigError> {
    TrafficClass::parse(s).ok_or_else(|| ConfigError::Parse(format!("bad class `{s}`")))
}

pub fn parse_drops_csv(text: &str) -> Result<DropSeries, ConfigError> {
    let mut s = DropSeries { starts: Vec::new(), totals: Vec::new(), by_key: BTreeMap::new() };
    let mut pending: Vec<((String, DropReason), usize, u64)> = Vec::new();
    for f in rows(text, DROPS_HEADER, 4)? {
        let count = parse_u64(f[3])?;
        if f[1] == ALL && f[2] == ALL {
            s.starts.push(parse_num(f[0])?);
            s.totals.push(count);
            continue;
        }
        let k = s.starts.len().checked_sub(1).ok_or_else(|| ConfigError::Parse("row before bucket total".into()))?;
        let reason = DropReason::parse(f[2]).ok_or_else(|| ConfigError::Parse(format!("bad reason `{}`", f[2])))?;
        pending.push(((f[1].to_string(), reason), k, count));
    }
    let n = s.starts.len();
    for (key, k, count) in pending {
        s.by_key.entry(key).or_insert_with(|| vec![0; n])[k] = count;
    }
    Ok(s)
}

pub fn parse_delivered_csv(text: &str) -> Result<Vec<ClassSeries>, ConfigError> {
    let mut out: Vec<ClassSeries> = Vec::new();
    for f in rows(text, DELIVERED_HEADER, 4)? {
        let class = parse_class(f[1])?;
        let idx = match out.iter().position(|s| s.class == class) {
            Some(i) => i,
            None => {
                out.push(ClassSeries { class, starts: Vec::new(), packets: Vec::new(), bits: Vec::new() });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.starts.push(parse_num(f[0])?);
        s.packets.push(parse_u64(f[2])?);
        s.bits.push(parse_u64(f[3])?);
    }
    Ok(out)
}

pub fn parse_delay_csv(text: &str) -> Result<Vec<DelayPoint>, ConfigError> {
    rows(text, DELAY_HEADER, 4)?
        .into_iter()
        .map(|f| {
            Ok(DelayPoint {
                delivery_time_s: parse_num(f[0])?,
                class: parse_class(f[1])?,
                delay_s: parse_num(f[2])?,
                running_mean_s: parse_num(f[3])?,
            })
        })
        .collect()
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, ConfigError> {
    rows(text, SUMMARY_HEADER, 7)?
        .into_iter()
        .map(|f| {
            Ok(SummaryRow {
                scheduler: f[0].to_string(),
                class: parse_class(f[1])?,
                offered_pkts: parse_u64(f[2])?,
                delivered_pkts: parse_u64(f[3])?,
                dropped_pkts: parse_u64(f[4])?,
                mean_delay_s: parse_num(f[5])?,
                p99_delay_s: parse_num(f[6])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s).unwrap()
    }

    fn drop_at(s: f64) -> PacketRecord {
        PacketRecord {
            id: PacketId(0),
            flow_id: FlowId(0),
            class: TrafficClass::Data,
            size_bits: 4000,
            created_at: SimTime::ZERO,
            fate: Fate::Dropped { at: t(s), site: "r1-r2".into(), reason: DropReason::TailDrop },
        }
    }

    fn delivered(class: TrafficClass, created: f64, at: f64) -> PacketRecord {
        PacketRecord {
            id: PacketId(0),
            flow_id: FlowId(0),
            class,
            size_bits: 1600,
            created_at: t(created),
            fate: Fate::Delivered { at: t(at) },
        }
    }

    #[test]
    fn formats_nine_significant_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(120.0), "120");
        assert_eq!(fmt_num(0.0285714285714), "0.0285714286");
        assert_eq!(fmt_num(123456789012.0), "1.23456789e+11");
        assert_eq!(fmt_num(0.00001234), "1.234e-05");
        assert_eq!(fmt_num(0.0001234), "0.0001234");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn no_drops_is_all_zero() {
        let s = drops_over_time(&[], 1.0, 5.0);
        assert_eq!(s.totals, vec![0; 5]);
        assert!(s.by_key.is_empty());
    }

    #[test]
    fn drops_bucketed_by_time() {
        let s = drops_over_time(&[drop_at(0.5), drop_at(1.5), drop_at(1.6)], 1.0, 2.0);
        assert_eq!(s.totals, vec![1, 2]);
        assert_eq!(s.by_key[&("r1-r2".to_string(), DropReason::TailDrop)], vec![1, 2]);
    }

    #[test]
    fn running_mean_is_prefix_mean() {
        let recs = [
            delivered(TrafficClass::Voice, 0.0, 0.1),
            delivered(TrafficClass::Voice, 1.0, 1.2),
            delivered(TrafficClass::Voice, 2.0, 2.3),
        ];
        let pts = time_average_delay(&recs, TrafficClass::Voice);
        let means: Vec<f64> = pts.iter().map(|p| p.running_mean_s).collect();
        assert_eq!(means, vec![0.1, 0.15, 0.2]);
        assert!(time_average_delay(&recs, TrafficClass::Video).is_empty());
    }

    #[test]
    fn class_without_sources_is_zero() {
        let recs = [delivered(TrafficClass::Voice, 0.0, 0.1)];
        let s = received_per_class(&recs, TrafficClass::Video, 1.0, 3.0);
        assert_eq!(s.packets, vec![0, 0, 0]);
    }

    #[test]
    fn csv_round_trips() {
        let mut recs = vec![drop_at(0.5), drop_at(2.2)];
        for k in 0..50 {
            let c = TrafficClass::ALL[k % 3];
            recs.push(delivered(c, k as f64 * 0.037, k as f64 * 0.037 + 0.0123 * (k % 7) as f64 + 0.001));
        }
        let drops = drops_over_time(&recs, 0.3, 3.0);
        assert_eq!(parse_drops_csv(&drops_csv(&drops)).unwrap(), drops);
        let del: Vec<_> = TrafficClass::ALL.iter().map(|c| received_per_class(&recs, *c, 0.3, 3.0)).collect();
        assert_eq!(parse_delivered_csv(&delivered_csv(&del)).unwrap(), del);
        let pts = delay_points(&recs);
        assert_eq!(parse_delay_csv(&delay_csv(&pts)).unwrap(), pts);
        let mut offered = BTreeMap::new();
        offered.insert(TrafficClass::Voice, 20);
        let sum = summarize("fifo", &recs, &offered);
        let back = parse_summary_csv(&summary_csv(&sum)).unwrap();
        assert_eq!(summary_csv(&back), summary_csv(&sum));
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[3.0], 0.99), 3.0);
        assert!(percentile(&[], 0.99).is_nan());
    }
}
