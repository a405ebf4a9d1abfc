//! Discrete-event harness driving synthetic students and teachers through
//! the real engine on a virtual clock. Identical configs give identical
//! logs, byte for byte.

mod config;
mod report;
mod runner;
pub mod table1;

use std::io;

use thiserror::Error;

use crate::error::CoreError;
use crate::event::{EventRecord, EventSink, MemoryLog};

pub use config::{ResponseDelay, SimConfig};
pub use report::{LatencyQuantiles, SimReport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub records: Vec<EventRecord>,
}

pub fn run_sim(config: &SimConfig) -> Result<SimOutcome, SimError> {
    let (report, log) = run_sim_with_sink(config, MemoryLog::default())?;
    Ok(SimOutcome { report, records: log.records })
}

/// Runs with a caller-supplied sink, e.g. a file writer or a probe.
pub fn run_sim_with_sink<S: EventSink>(config: &SimConfig, sink: S) -> Result<(SimReport, S), SimError> {
    runner::World::new(config, sink)?.run()
}
