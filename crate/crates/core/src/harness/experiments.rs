//! Parameter sweeps that compare the systems against each other and against
//! their own cost-free baselines.

use crate::analytics::{PlacementStrategy, SchedulerMode};
use crate::Error;

use super::metrics::{MetricsReport, PlotPoint};
use super::sim::run;
use super::workload::{generate_workload, WorkloadSpec};
use super::{SystemConfig, SystemKind};

/// One placement/scheduler configuration at one latency scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPoint {
    pub latency_scale: f64,
    /// `local`, `distributed`, `hybrid` or `hybrid-sched`.
    pub series: String,
    pub anl_throughput: f64,
    pub update_latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPoint {
    pub anl_queries: usize,
    pub normalized_txn_throughput: f64,
    pub snapshots: u64,
    pub snapshot_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvccPoint {
    pub update_ratio: f64,
    pub normalized_anl_throughput: f64,
    pub mean_chain_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPoint {
    pub update_ratio: f64,
    pub polynesia_normalized_txn: f64,
    pub mi_sw_normalized_txn: f64,
}

fn report(sys: &SystemConfig, spec: &WorkloadSpec) -> Result<MetricsReport, Error> {
    Ok(run(sys, &generate_workload(spec)?)?.report)
}

/// Real and ideal reports for the same workload.
fn pair(kind: SystemKind, spec: &WorkloadSpec) -> Result<(MetricsReport, MetricsReport), Error> {
    let mut sys = SystemConfig::new(kind);
    let real = report(&sys, spec)?;
    sys.ideal = true;
    Ok((real, report(&sys, spec)?))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

pub fn placement_spec() -> WorkloadSpec {
    WorkloadSpec {
        txn_threads: 4,
        txn_queries_per_thread: 1000,
        update_ratio: 0.5,
        anl_threads: 4,
        anl_queries_per_thread: 4,
        tables: 1,
        rows: 64_000,
        columns: 4,
        join_fraction: 0.0,
        ..WorkloadSpec::default()
    }
}

/// Runs the engine under each placement strategy, plus the hybrid layout
/// with the optimized scheduler, with every latency multiplied by
/// `latency_scale`.
pub fn placement_experiment(latency_scale: f64) -> Result<Vec<PlacementPoint>, Error> {
    let spec = placement_spec();
    let w = generate_workload(&spec)?;
    let configs = [
        ("local", PlacementStrategy::Local, SchedulerMode::Basic),
        ("distributed", PlacementStrategy::Distributed, SchedulerMode::Basic),
        ("hybrid", PlacementStrategy::Hybrid, SchedulerMode::Basic),
        ("hybrid-sched", PlacementStrategy::Hybrid, SchedulerMode::Optimized),
    ];
    let mut out = Vec::with_capacity(configs.len());
    for (series, placement, scheduler) in configs {
        let mut sys = SystemConfig::new(SystemKind::Polynesia);
        sys.placement = placement;
        sys.scheduler = scheduler;
        sys.topology = sys.topology.with_latency_scale(latency_scale);
        let r = run(&sys, &w)?.report;
        out.push(PlacementPoint {
            latency_scale,
            series: series.to_string(),
            anl_throughput: r.anl_throughput,
            update_latency_ns: r.update_application_latency_ns,
        });
    }
    Ok(out)
}

pub const SNAPSHOT_QUERY_COUNTS: [usize; 3] = [8, 16, 32];

pub fn snapshot_spec(anl_queries: usize) -> WorkloadSpec {
    WorkloadSpec {
        txn_threads: 4,
        txn_queries_per_thread: 5000,
        update_ratio: 0.5,
        anl_threads: 1,
        anl_queries_per_thread: anl_queries,
        tables: 1,
        rows: 16_000,
        columns: 4,
        join_fraction: 0.0,
        ..WorkloadSpec::default()
    }
}

/// Transactional throughput of full-copy snapshotting relative to a free
/// copy, as the analytical query count grows.
pub fn snapshot_experiment() -> Result<Vec<SnapshotPoint>, Error> {
    SNAPSHOT_QUERY_COUNTS
        .iter()
        .map(|&n| {
            let (real, ideal) = pair(SystemKind::SiSs, &snapshot_spec(n))?;
            Ok(SnapshotPoint {
                anl_queries: n,
                normalized_txn_throughput: ratio(real.txn_throughput, ideal.txn_throughput),
                snapshots: real.snapshots,
                snapshot_bytes: real.snapshot_bytes,
            })
        })
        .collect()
}

pub const MVCC_UPDATE_RATIOS: [f64; 3] = [1.0 / 16.0, 0.25, 1.0];

pub fn mvcc_spec(update_ratio: f64) -> WorkloadSpec {
    WorkloadSpec {
        txn_threads: 4,
        txn_queries_per_thread: 3000,
        update_ratio,
        anl_threads: 1,
        anl_queries_per_thread: 8,
        tables: 1,
        rows: 4000,
        columns: 4,
        join_fraction: 0.0,
        ..WorkloadSpec::default()
    }
}

/// Analytical throughput of version-chain reads relative to free chain
/// walks, as the update share grows.
pub fn mvcc_experiment() -> Result<Vec<MvccPoint>, Error> {
    MVCC_UPDATE_RATIOS
        .iter()
        .map(|&u| {
            let (real, ideal) = pair(SystemKind::SiMvcc, &mvcc_spec(u))?;
            Ok(MvccPoint {
                update_ratio: u,
                normalized_anl_throughput: ratio(real.anl_throughput, ideal.anl_throughput),
                mean_chain_length: real.mean_chain_length,
            })
        })
        .collect()
}

pub const PROPAGATION_UPDATE_RATIOS: [f64; 3] = [0.5, 0.8, 1.0];

pub fn propagation_spec(update_ratio: f64) -> WorkloadSpec {
    WorkloadSpec {
        txn_threads: 4,
        txn_queries_per_thread: 2000,
        update_ratio,
        anl_threads: 1,
        anl_queries_per_thread: 4,
        tables: 2,
        rows: 4000,
        columns: 4,
        ..WorkloadSpec::default()
    }
}

/// Transactional throughput of in-memory and host-side propagation, each
/// relative to its own free-propagation baseline.
pub fn propagation_experiment() -> Result<Vec<PropagationPoint>, Error> {
    PROPAGATION_UPDATE_RATIOS
        .iter()
        .map(|&u| {
            let spec = propagation_spec(u);
            let (pr, pi) = pair(SystemKind::Polynesia, &spec)?;
            let (mr, mi) = pair(SystemKind::MiSw, &spec)?;
            Ok(PropagationPoint {
                update_ratio: u,
                polynesia_normalized_txn: ratio(pr.txn_throughput, pi.txn_throughput),
                mi_sw_normalized_txn: ratio(mr.txn_throughput, mi.txn_throughput),
            })
        })
        .collect()
}

/// Runs every sweep and flattens the results into plot rows.
pub fn plot_data() -> Result<Vec<PlotPoint>, Error> {
    let mut out = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        for p in placement_experiment(scale)? {
            out.push(PlotPoint { figure: "placement", series: format!("{}@{}", p.series, scale), x: scale, y: p.anl_throughput });
            out.push(PlotPoint {
                figure: "update_latency",
                series: format!("{}@{}", p.series, scale),
                x: scale,
                y: p.update_latency_ns,
            });
        }
    }
    for p in snapshot_experiment()? {
        out.push(PlotPoint { figure: "snapshot_cost", series: "si-ss".into(), x: p.anl_queries as f64, y: p.normalized_txn_throughput });
    }
    for p in mvcc_experiment()? {
        out.push(PlotPoint { figure: "mvcc_chains", series: "anl_throughput".into(), x: p.update_ratio, y: p.normalized_anl_throughput });
        out.push(PlotPoint { figure: "mvcc_chains", series: "mean_chain_length".into(), x: p.update_ratio, y: p.mean_chain_length });
    }
    for p in propagation_experiment()? {
        out.push(PlotPoint {
            figure: "propagation_overhead",
            series: "polynesia".into(),
            x: p.update_ratio,
            y: p.polynesia_normalized_txn,
        });
        out.push(PlotPoint { figure: "propagation_overhead", series: "mi-sw".into(), x: p.update_ratio, y: p.mi_sw_normalized_txn });
    }
    Ok(out)
}
