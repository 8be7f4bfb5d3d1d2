//! Run reports and their CSV form.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::analytics::QueryResult;
use crate::txn::{CommitId, UpdateLogEntry};
use crate::Error;

use super::SystemConfig;

/// Aggregate metrics of one run. Times are simulated nanoseconds and
/// throughputs are queries per simulated second.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub system: String,
    pub placement: String,
    pub scheduler: String,
    pub ideal: bool,
    pub seed: u64,
    pub txn_queries: u64,
    pub anl_queries: u64,
    pub txn_throughput: f64,
    pub anl_throughput: f64,
    pub txn_makespan_ns: f64,
    pub anl_makespan_ns: f64,
    pub makespan_ns: f64,
    pub update_entries: u64,
    pub update_rounds: u64,
    pub update_application_latency_ns: f64,
    pub onchip_bytes: u64,
    pub offchip_bytes: u64,
    pub snapshots: u64,
    pub snapshot_bytes: u64,
    pub mean_chain_length: f64,
    pub answer_digest: String,
}

pub const CSV_HEADER: [&str; 21] = [
    "system",
    "placement",
    "scheduler",
    "ideal",
    "seed",
    "txn_queries",
    "anl_queries",
    "txn_throughput",
    "anl_throughput",
    "txn_makespan_ns",
    "anl_makespan_ns",
    "makespan_ns",
    "update_entries",
    "update_rounds",
    "update_application_latency_ns",
    "onchip_bytes",
    "offchip_bytes",
    "snapshots",
    "snapshot_bytes",
    "mean_chain_length",
    "answer_digest",
];

impl MetricsReport {
    /// Fields in [`CSV_HEADER`] order. `f64` uses the shortest decimal form
    /// that round-trips, never an exponent.
    pub fn record(&self) -> Vec<String> {
        vec![
            self.system.clone(),
            self.placement.clone(),
            self.scheduler.clone(),
            self.ideal.to_string(),
            self.seed.to_string(),
            self.txn_queries.to_string(),
            self.anl_queries.to_string(),
            self.txn_throughput.to_string(),
            self.anl_throughput.to_string(),
            self.txn_makespan_ns.to_string(),
            self.anl_makespan_ns.to_string(),
            self.makespan_ns.to_string(),
            self.update_entries.to_string(),
            self.update_rounds.to_string(),
            self.update_application_latency_ns.to_string(),
            self.onchip_bytes.to_string(),
            self.offchip_bytes.to_string(),
            self.snapshots.to_string(),
            self.snapshot_bytes.to_string(),
            self.mean_chain_length.to_string(),
            self.answer_digest.clone(),
        ]
    }

    pub(crate) fn labels(sys: &SystemConfig) -> (String, String) {
        if sys.system.uses_vaults() {
            (sys.placement.to_string(), sys.scheduler.to_string())
        } else {
            ("host".to_string(), "host".to_string())
        }
    }
}

/// One analytical query as executed during the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub stream: usize,
    pub index: usize,
    pub plan: String,
    /// Newest commit reflected in the data the query read.
    pub watermark: CommitId,
    pub answer: QueryResult,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub queries: Vec<QueryRecord>,
    /// Answers of the final pass, evaluated after every update was applied.
    pub final_answers: Vec<QueryResult>,
    /// Every committed log entry in commit order.
    pub commit_log: Vec<UpdateLogEntry>,
    /// Update-application latency of each round, in ns.
    pub round_latencies: Vec<f64>,
}

/// FNV-1a over the canonical text of the answers.
pub fn answer_digest(answers: &[QueryResult]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in format!("{answers:?}").bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Writes a header and one row per report to `out`.
pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces `path` with a header plus one row per report.
pub fn emit_csv(reports: &[MetricsReport], path: &Path) -> Result<(), Error> {
    write_csv(reports, std::fs::File::create(path)?)
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_csv(report: &MetricsReport, path: &Path) -> Result<(), Error> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    w.write_record(report.record())?;
    w.flush()?;
    Ok(())
}

/// One point of a plotted series.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub figure: &'static str,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

pub const PLOT_HEADER: [&str; 4] = ["figure", "series", "x", "y"];

pub fn write_plot_csv<W: Write>(points: &[PlotPoint], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for p in points {
        w.write_record([p.figure.to_string(), p.series.clone(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
