//! Cycle-level simulator of a heterogeneous SoC memory subsystem in which
//! every DMA meters its own performance, raises its priority when it falls
//! behind, and the NoC and DRAM controller arbitrate on those priorities.

pub mod clock;
pub mod config;
pub mod controller;
pub mod dram;
pub mod harness;
pub mod meter;
pub mod metrics;
pub mod noc;
pub mod sim;
pub mod traffic;
pub mod txn;
pub mod types;

pub use clock::SimClock;
pub use config::{ConfigError, DataflowCase, ScenarioConfig};
pub use controller::Policy;
pub use sim::{run, run_with, SimOptions, SimulationReport, World};
pub use txn::Transaction;
pub use types::{AccessKind, Core, DmaId, PriorityLevel, QueueClass};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Dram(#[from] dram::DramError),
    #[error(transparent)]
    Meter(#[from] meter::MeterError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Topology(#[from] noc::TopologyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}
