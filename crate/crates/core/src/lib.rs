//! Packet-level simulator for mobile ad-hoc networks under black-hole attack.
//!
//! The library models a static wireless topology with promiscuous overhearing,
//! AODV-style route discovery, a black-hole adversary that forges fresh routes
//! and drops data, and two intrusion detection schemes: the classic always-on
//! Watchdog and a selective, ACK-gated, segment-scoped variant. An analytics
//! layer provides the closed-form promiscuous-listening cost model and per-run
//! delivery statistics.

pub mod analytics;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod routing;
pub mod runner;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use runner::{RunOutput, Simulation};
pub use scenario::{IdsMode, ScenarioSpec};
