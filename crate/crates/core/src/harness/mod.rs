//! Workload generation, system composition and metric collection.
//!
//! Four systems share the transactional engine and differ in how the
//! analytical side sees updates:
//!
//! | system      | analytical data              | consistency           | propagation          |
//! |-------------|------------------------------|-----------------------|----------------------|
//! | `polynesia` | encoded replica in the vaults | lazy column snapshots | in-memory units      |
//! | `mi-sw`     | encoded replica, host side    | lazy column snapshots | host, synchronous    |
//! | `si-ss`     | the row store itself          | full copy per query   | none                 |
//! | `si-mvcc`   | the row store itself          | tuple version chains  | none                 |

mod experiments;
mod metrics;
mod sim;
mod workload;

use std::fmt;
use std::str::FromStr;

use crate::analytics::{PlacementStrategy, SchedulerMode};
use crate::vault::TopologyConfig;
use crate::Error;

pub use experiments::{
    mvcc_experiment, placement_experiment, plot_data, propagation_experiment, snapshot_experiment, MvccPoint, PlacementPoint,
    PropagationPoint, SnapshotPoint,
};
pub use metrics::{
    answer_digest, append_csv, emit_csv, write_csv, write_plot_csv, MetricsReport, PlotPoint, QueryRecord, RunOutput, CSV_HEADER,
    PLOT_HEADER,
};
pub use sim::run;
pub use workload::{generate_workload, Workload, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    Polynesia,
    SiSs,
    SiMvcc,
    MiSw,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [SystemKind::Polynesia, SystemKind::SiSs, SystemKind::SiMvcc, SystemKind::MiSw];

    /// Whether analytics run on the in-memory threads (and so placement and
    /// scheduler settings matter).
    pub fn uses_vaults(self) -> bool {
        self == SystemKind::Polynesia
    }

    /// Whether the system keeps a separate column replica fed by the logs.
    pub fn has_replica(self) -> bool {
        matches!(self, SystemKind::Polynesia | SystemKind::MiSw)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Polynesia => "polynesia",
            SystemKind::SiSs => "si-ss",
            SystemKind::SiMvcc => "si-mvcc",
            SystemKind::MiSw => "mi-sw",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::InvalidSystem(format!("unknown system `{s}`")))
    }
}

/// How one run is composed.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub system: SystemKind,
    pub placement: PlacementStrategy,
    pub scheduler: SchedulerMode,
    pub topology: TopologyConfig,
    /// Makes the system's consistency and propagation machinery free while
    /// keeping its functional behavior. Used as the normalization baseline.
    pub ideal: bool,
}

impl SystemConfig {
    pub fn new(system: SystemKind) -> Self {
        SystemConfig {
            system,
            placement: PlacementStrategy::Hybrid,
            scheduler: SchedulerMode::Optimized,
            topology: TopologyConfig::default(),
            ideal: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.topology.validate()?;
        Ok(())
    }
}
