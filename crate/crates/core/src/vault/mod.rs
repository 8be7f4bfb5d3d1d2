//! Virtual-time cost model of the 3D-stacked memory: vault ports, the
//! off-chip channel, copy-unit transfers and a deterministic event queue.

mod config;
mod events;
mod resources;

use thiserror::Error;

pub use config::{ConfigError, TopologyConfig};
pub use events::{Event, EventQueue};
pub use resources::{Charge, Origin, Progress, Resources, Step, VaultId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VaultError {
    #[error("vault {0} does not exist")]
    UnknownVault(usize),
    #[error("event at {time} ns is before the clock ({now} ns)")]
    TimeRegression { time: f64, now: f64 },
}
