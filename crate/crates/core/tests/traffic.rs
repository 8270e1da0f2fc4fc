//! Long-run offered rates of the traffic generators.

use qosim::traffic::{Source, SourceSpec, TrafficModel};
use qosim::NodeId;

/// Emits every packet of `model` over `[0, horizon)` and returns the
/// measured rate in bits per second.
fn measured_rate(model: TrafficModel, horizon: f64, seed: u64) -> f64 {
    let spec = SourceSpec::new("probe", model, "a", "b", 0.0, horizon);
    let mut src = Source::new(0, &spec, NodeId(0), NodeId(1), seed).unwrap();
    let mut next = src.first_emission();
    let mut bits = 0u64;
    let mut last = 0.0;
    while let Some(t) = next {
        assert!(t.secs() >= last, "emission times went backwards");
        last = t.secs();
        let (pkt, n) = src.next_emission(t);
        assert_eq!(pkt.created_at, t);
        bits += pkt.size_bits();
        next = n;
    }
    bits as f64 / horizon
}

fn relative_error(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}

#[test]
fn voice_rate_is_exact_up_to_one_packet() {
    let model = TrafficModel::voice_default();
    let rate = measured_rate(model.clone(), 120.0, 1);
    // 64 kb/s in 200-byte packets: 40 packets per second
    assert!((rate - 64_000.0).abs() <= 1600.0 / 120.0 + 1e-9, "{rate}");
    assert_eq!(model.mean_rate_bps(), 64_000.0);
}

#[test]
fn constant_size_video_matches_nominal_rate() {
    for seed in 1..=3 {
        let rate = measured_rate(TrafficModel::video_default(), 600.0, seed);
        assert!(relative_error(rate, 300_000.0) <= 0.02, "seed {seed}: {rate}");
    }
}

#[test]
fn variable_size_video_keeps_its_mean() {
    let model = TrafficModel::VideoFrames {
        rate_bps: 700_000,
        fps: 25.0,
        mtu_bytes: 1500,
        frame_sigma: 0.4,
        line_rate_bps: 100_000_000,
    };
    let rate = measured_rate(model, 3600.0, 7);
    assert!(relative_error(rate, 700_000.0) <= 0.02, "{rate}");
}

#[test]
fn on_off_data_matches_duty_cycle() {
    let model = TrafficModel::data_default();
    // on 1 s, off 2 s at 64 kb/s peak
    let expected = 64_000.0 * 1.0 / 3.0;
    assert!((model.mean_rate_bps() - expected).abs() < 1e-9);
    for seed in 1..=3 {
        let rate = measured_rate(model.clone(), 20_000.0, seed);
        assert!(relative_error(rate, expected) <= 0.05, "seed {seed}: {rate}");
    }
}

#[test]
fn sources_stop_at_their_stop_time() {
    let spec = SourceSpec::new("v", TrafficModel::voice_default(), "a", "b", 2.0, 3.0);
    let mut src = Source::new(4, &spec, NodeId(0), NodeId(1), 9).unwrap();
    let mut next = src.first_emission();
    let mut count = 0;
    while let Some(t) = next {
        assert!((2.0..3.0).contains(&t.secs()));
        let (pkt, n) = src.next_emission(t);
        assert_eq!(pkt.marking.flow_label(), 5);
        count += 1;
        next = n;
    }
    assert_eq!(count, 40);
}
