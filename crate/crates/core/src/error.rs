use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid simulated time {0}: must be finite and non-negative")]
    InvalidTime(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("event at {fire_at}s scheduled before the current clock {now}s")]
    InThePast { fire_at: f64, now: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown scenario {0}; expected 1, 2 or 3")]
    UnknownScenario(u32),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no route from `{from}` to `{to}`")]
    Unreachable { from: String, to: String },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ConfigError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

/// Errors surfaced while running a simulation to completion.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
