//! Error type shared across the crate.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A node id was referenced that does not exist in the topology.
    UnknownNode(u32),
    /// An event was scheduled before the engine's current time.
    EventInPast { now: f64, requested: f64 },
    /// Unicast transmission to a node outside the sender's radio range.
    NotANeighbor { sender: u32, target: u32 },
    /// Route selection was asked to pick from an empty reply cache.
    NoRoute,
    /// The analytic cost formulas are only defined under their preconditions.
    InvalidCostInput(String),
    /// Packet conservation failed when auditing a run's trace.
    ConservationViolation(String),
    /// A scenario file failed to parse or validate.
    Config(String),
    /// Runs with different scenarios cannot be compared.
    MismatchedScenarios(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnknownNode(id) => write!(f, "unknown node id {id}"),
            Error::EventInPast { now, requested } => {
                write!(f, "event scheduled at {requested} before current time {now}")
            }
            Error::NotANeighbor { sender, target } => {
                write!(f, "node {target} is not within range of node {sender}")
            }
            Error::NoRoute => write!(f, "no route reply available to select from"),
            Error::InvalidCostInput(msg) => write!(f, "invalid cost-model input: {msg}"),
            Error::ConservationViolation(msg) => write!(f, "conservation violation: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::MismatchedScenarios(msg) => write!(f, "mismatched scenarios: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
