//! Deterministic message-passing simulation: configuration, scripted
//! schedules, the kernel, and traces.

pub mod config;
pub mod kernel;
pub mod schedule;
pub mod trace;

use thiserror::Error;

pub use config::{ConfigError, FaultPlan, Partition, Protocol, SimConfig, Strategy};
pub use kernel::{Ctx, Kernel, NoObserver, Observer, Process, Signed};
pub use schedule::{parse_schedule, MessageFilter, ScheduleError, Selector};
pub use trace::{Decision, EventKind, Trace, TraceEvent, TraceHeader, TraceParseError};

pub type ProcessId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expected {expected} processes, got {got}")]
    ProcessCount { expected: usize, got: usize },
    #[error("schedule entry {index}: {reason}")]
    Schedule { index: usize, reason: String },
    #[error("process {by} tried to send as {claimed}")]
    Forgery { by: ProcessId, claimed: ProcessId },
}
