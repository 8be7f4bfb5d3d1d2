//! Analytical island: plans, placement, task decomposition, scheduling and
//! operator execution.

mod operators;
mod placement;
mod plan;
mod scheduler;
mod task;

use thiserror::Error;

use crate::storage::{ColumnRef, StorageError};
use crate::vault::VaultError;

pub use operators::{code_matches, code_range, execute_operator, run_dag, AggState, ColumnSource, Intermediate, QueryResult};
pub use placement::{place, ColumnPlacement, Partition, PlacementPlan, PlacementStrategy};
pub use plan::{AggFn, CmpOp, Predicate, QueryPlan};
pub use scheduler::{schedule, topological_order, Assignment, Scheduler, SchedulerMode, Scope, Trace, TraceEntry};
pub use task::{decompose, task_steps, DictInfo, Pipeline, SegmentRole, Task, TaskDag, TaskId, TaskKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("parse error at token {token}: {message}")]
    Parse { token: usize, message: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("column {0} has no placement")]
    UnplacedColumn(ColumnRef),
    #[error("column {0} is missing from the snapshot")]
    MissingColumn(ColumnRef),
    #[error("task dependencies contain a cycle")]
    CyclicDependency,
    #[error("task {0} does not exist")]
    UnknownTask(usize),
    #[error("task {0} completed twice")]
    TaskAlreadyCompleted(usize),
    #[error("vault {0} does not exist")]
    UnknownVault(usize),
    #[error("row {row} is outside a column of {rows} rows")]
    RowOutOfRange { row: u64, rows: u64 },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Vault(#[from] VaultError),
}
