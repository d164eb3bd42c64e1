//! System-level simulator of context-aware device-to-device relaying in a
//! massive machine-type communication cell.
//!
//! A run deploys static sensors around one base station, assigns each a
//! transmission mode (cellular, relay, sidelink) every selection period,
//! drains batteries day by day and records how many days each sensor was
//! served. Three schemes are compared: no relaying (`R12`), SNR-ranked
//! relaying without battery context (`R13`) and the context-aware scheme.

pub mod channel;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod scenario;
pub mod signaling;
pub mod tms;

pub use config::SimConfig;
pub use engine::{simulate, simulate_network, Network, SimOptions, SimulationResult};
pub use error::{ConfigError, SimError};
pub use tms::Scheme;
