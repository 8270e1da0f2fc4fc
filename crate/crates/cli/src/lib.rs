//! Command-line front end: runs scenarios and writes their CSV outputs.

use std::path::{Path, PathBuf};
use std::thread;

use clap::{Parser, ValueEnum};
use qosim::output::write_run_dir;
use qosim::scenario::scenario_schedulers;
use qosim::{build_scenario, run, ConfigError, Overrides, ScenarioConfig, SchedulerKind, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchedulerArg {
    Fifo,
    Pq,
    Cq,
    CqLlq,
    Wfq,
    WfqLlq,
    PwfqRr,
}

impl From<SchedulerArg> for SchedulerKind {
    fn from(a: SchedulerArg) -> Self {
        match a {
            SchedulerArg::Fifo => SchedulerKind::Fifo,
            SchedulerArg::Pq => SchedulerKind::Pq,
            SchedulerArg::Cq => SchedulerKind::Cq,
            SchedulerArg::CqLlq => SchedulerKind::CqLlq,
            SchedulerArg::Wfq => SchedulerKind::Wfq,
            SchedulerArg::WfqLlq => SchedulerKind::WfqLlq,
            SchedulerArg::PwfqRr => SchedulerKind::PwfqRr,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qosim", version, about = "Discrete-event QoS scheduling simulator")]
struct Args {
    /// Built-in scenario to run (1, 2 or 3).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    scenario: Option<u32>,
    /// Router egress discipline.
    #[arg(long, value_enum, conflicts_with = "all_schedulers")]
    scheduler: Option<SchedulerArg>,
    /// Run every discipline of the scenario, one subdirectory each.
    #[arg(long)]
    all_schedulers: bool,
    /// Resource reservation for the configured flows.
    #[arg(long, value_enum)]
    rsvp: Option<Toggle>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// TOML scenario file; replaces the built-in scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Time-series bucket width in seconds.
    #[arg(long)]
    bucket: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Usage(c.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn base_config(args: &Args) -> Result<ScenarioConfig, CliError> {
    match (&args.config, args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg = ScenarioConfig::from_toml(&text)?;
            if let Some(n) = args.scenario {
                cfg.run.scenario = n;
            }
            Ok(cfg)
        }
        (None, Some(n)) => Ok(build_scenario(n, &Overrides::default())?),
        (None, None) => Err(CliError::Usage("either --scenario or --config is required".into())),
    }
}

fn run_one(cfg: &ScenarioConfig, dir: &Path) -> Result<String, CliError> {
    let res = run(cfg)?;
    write_run_dir(dir, cfg, &res)?;
    Ok(format!(
        "{}: emitted {} delivered {} dropped {} -> {}",
        res.scheduler,
        res.emitted,
        res.delivered().count(),
        res.dropped().count(),
        dir.display()
    ))
}

fn execute(args: Args) -> Result<Vec<String>, CliError> {
    let mut cfg = base_config(&args)?;
    let overrides = Overrides {
        seed: args.seed,
        duration_s: args.duration,
        scheduler: args.scheduler.map(Into::into),
        rsvp: args.rsvp.map(|t| t == Toggle::On),
        bucket_s: args.bucket,
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    if !args.all_schedulers {
        return Ok(vec![run_one(&cfg, &args.out)?]);
    }
    let configs: Vec<ScenarioConfig> = scenario_schedulers(cfg.run.scenario)
        .iter()
        .map(|k| {
            let mut c = cfg.clone();
            c.scheduler.kind = *k;
            c
        })
        .collect();
    thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let dir = args.out.join(c.scheduler.kind.as_str());
                s.spawn(move || run_one(c, &dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    })
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(args) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
