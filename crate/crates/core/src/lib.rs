//! In-memory HTAP engine with a virtual-time cost model of a
//! processing-in-memory substrate.
//!
//! A row-store transactional island logs every write; propagation merges
//! and ships the logs into a dictionary-encoded, partitioned column replica;
//! analytical queries run against lazily materialized snapshots. The
//! [`vault`] module prices all data movement, and [`harness`] composes the
//! pieces into complete systems driven by synthetic workloads.

pub mod analytics;
pub mod application;
pub mod consistency;
pub mod harness;
pub mod propagation;
pub mod storage;
pub mod txn;
pub mod vault;

use thiserror::Error;

/// Any failure surfaced by the crate's top-level entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error("invalid system configuration: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Storage(#[from] storage::StorageError),
    #[error(transparent)]
    Txn(#[from] txn::TxnError),
    #[error(transparent)]
    Propagation(#[from] propagation::PropagationError),
    #[error(transparent)]
    Apply(#[from] application::ApplyError),
    #[error(transparent)]
    Consistency(#[from] consistency::ConsistencyError),
    #[error(transparent)]
    Analytics(#[from] analytics::AnalyticsError),
    #[error(transparent)]
    Vault(#[from] vault::VaultError),
    #[error(transparent)]
    Config(#[from] vault::ConfigError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidSystem(_) => "invalid_system",
            Error::Storage(_) => "storage",
            Error::Txn(_) => "txn",
            Error::Propagation(_) => "propagation",
            Error::Apply(_) => "application",
            Error::Consistency(_) => "consistency",
            Error::Analytics(_) => "analytics",
            Error::Vault(_) => "vault",
            Error::Config(_) => "config",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }
}
