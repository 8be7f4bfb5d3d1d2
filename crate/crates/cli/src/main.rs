//! `htapsim`: runs simulated HTAP systems over a synthetic workload and
//! writes one CSV row of metrics per system.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::Parser;
use htap_core::analytics::{PlacementStrategy, SchedulerMode};
use htap_core::harness::{
    append_csv, generate_workload, plot_data, run, write_csv, write_plot_csv, SystemConfig, SystemKind, WorkloadSpec,
};
use htap_core::vault::TopologyConfig;

#[derive(Debug, Parser)]
#[command(name = "htapsim", version, about = "Simulate HTAP systems on a processing-in-memory cost model")]
struct Cli {
    /// Systems to run, comma separated: polynesia, si-ss, si-mvcc, mi-sw, or `all`.
    #[arg(long, default_value = "polynesia", value_delimiter = ',')]
    system: Vec<String>,
    /// Column placement: local, distributed or hybrid.
    #[arg(long, default_value = "hybrid")]
    placement: PlacementStrategy,
    /// Task scheduler: basic or optimized.
    #[arg(long, default_value = "optimized")]
    scheduler: SchedulerMode,
    #[arg(long)]
    txn_threads: Option<usize>,
    /// Transactional queries per thread.
    #[arg(long)]
    txn_queries: Option<usize>,
    #[arg(long)]
    update_ratio: Option<f64>,
    #[arg(long)]
    anl_threads: Option<usize>,
    /// Analytical queries per stream.
    #[arg(long)]
    anl_queries: Option<usize>,
    #[arg(long)]
    vaults: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// key=value file overriding topology and cost constants.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Append results to this CSV file instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    /// Run every parameter sweep and emit its series as CSV.
    #[arg(long)]
    plot_data: bool,
    /// Make consistency and propagation cost-free.
    #[arg(long)]
    ideal: bool,
}

fn topology(cli: &Cli) -> Result<TopologyConfig> {
    let mut cfg = TopologyConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = cfg.apply_text(&text).map_err(htap_core::Error::from)?;
    }
    if let Some(v) = cli.vaults {
        cfg.n_vaults = v;
    }
    if let Some(g) = cli.group_size {
        cfg.group_size = g;
    }
    cfg.validate().map_err(htap_core::Error::from)?;
    Ok(cfg)
}

fn workload(cli: &Cli) -> WorkloadSpec {
    let mut s = WorkloadSpec::default();
    s.txn_threads = cli.txn_threads.unwrap_or(s.txn_threads);
    s.txn_queries_per_thread = cli.txn_queries.unwrap_or(s.txn_queries_per_thread);
    s.update_ratio = cli.update_ratio.unwrap_or(s.update_ratio);
    s.anl_threads = cli.anl_threads.unwrap_or(s.anl_threads);
    s.anl_queries_per_thread = cli.anl_queries.unwrap_or(s.anl_queries_per_thread);
    s.seed = cli.seed.unwrap_or(s.seed);
    s
}

fn systems(names: &[String]) -> Result<Vec<SystemKind>> {
    if names.iter().any(|n| n == "all") {
        return Ok(SystemKind::ALL.to_vec());
    }
    Ok(names.iter().map(|n| n.parse::<SystemKind>()).collect::<Result<_, _>>()?)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = topology(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_config_string());
        return Ok(());
    }
    if cli.plot_data {
        let points = plot_data()?;
        match &cli.out {
            Some(path) => write_plot_csv(&points, fs::File::create(path)?)?,
            None => write_plot_csv(&points, io::stdout().lock())?,
        }
        return Ok(());
    }
    let w = generate_workload(&workload(cli))?;
    let mut reports = Vec::new();
    for kind in systems(&cli.system)? {
        let sys = SystemConfig { system: kind, placement: cli.placement, scheduler: cli.scheduler, topology: cfg.clone(), ideal: cli.ideal };
        reports.push(run(&sys, &w)?.report);
    }
    match &cli.out {
        Some(path) => {
            for r in &reports {
                append_csv(r, path)?;
            }
        }
        None => {
            let mut out = io::stdout().lock();
            write_csv(&reports, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn kind_of(e: &anyhow::Error) -> &'static str {
    if let Some(core) = e.downcast_ref::<htap_core::Error>() {
        return core.kind();
    }
    if e.downcast_ref::<io::Error>().is_some() {
        return "io";
    }
    "internal"
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={kind} message={one_line:?}");
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail("usage", &e.to_string()),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(kind_of(&e), &format!("{e:#}")),
    }
}
