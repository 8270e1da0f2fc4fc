//! Run directory layout: `drops.csv`, `delivered.csv`, `delay.csv`,
//! `summary.csv` and a TOML `manifest`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{ConfigError, SimError};
use crate::metrics::{
    delay_csv, delay_points, delivered_csv, drops_csv, drops_over_time, received_per_class, summarize, summary_csv,
};
use crate::model::TrafficClass;
use crate::network::RunResult;
use crate::scenario::ScenarioConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const FILES: [&str; 5] = ["drops.csv", "delivered.csv", "delay.csv", "summary.csv", "manifest"];

#[derive(Serialize)]
struct Stats {
    emitted: u64,
    delivered: u64,
    dropped: u64,
    in_flight: u64,
    events: u64,
    trace_digest: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    scenario: u32,
    scheduler: &'a str,
    seed: u64,
    rsvp: bool,
    signaling: Vec<String>,
    stats: Stats,
    config: &'a ScenarioConfig,
}

/// File name and contents of every output, in [`FILES`] order.
pub fn render(cfg: &ScenarioConfig, res: &RunResult) -> Result<Vec<(&'static str, String)>, ConfigError> {
    let (bucket, horizon) = (cfg.run.bucket_s, cfg.run.duration_s);
    let drops = drops_over_time(&res.records, bucket, horizon);
    let delivered: Vec<_> =
        TrafficClass::ALL.iter().map(|c| received_per_class(&res.records, *c, bucket, horizon)).collect();
    let manifest = Manifest {
        version: VERSION,
        scenario: cfg.run.scenario,
        scheduler: &res.scheduler,
        seed: cfg.run.seed,
        rsvp: cfg.rsvp.enabled,
        signaling: res.signaling.iter().map(|e| e.describe()).collect(),
        stats: Stats {
            emitted: res.emitted,
            delivered: res.delivered().count() as u64,
            dropped: res.dropped().count() as u64,
            in_flight: res.in_flight,
            events: res.events,
            trace_digest: format!("{:016x}", res.trace_digest),
        },
        config: cfg,
    };
    let manifest = toml::to_string(&manifest).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(vec![
        (FILES[0], drops_csv(&drops)),
        (FILES[1], delivered_csv(&delivered)),
        (FILES[2], delay_csv(&delay_points(&res.records))),
        (FILES[3], summary_csv(&summarize(&res.scheduler, &res.records, &res.offered))),
        (FILES[4], manifest),
    ])
}

/// Writes every output file into `dir`, creating it if needed.
pub fn write_run_dir(dir: &Path, cfg: &ScenarioConfig, res: &RunResult) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    for (name, text) in render(cfg, res)? {
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}
