//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use htap_core::analytics::{
    decompose, run_dag, schedule, PlacementPlan, PlacementStrategy, QueryPlan, QueryResult, SchedulerMode, Task, TaskDag, TaskKind,
};
use htap_core::application::{apply_naive, apply_optimized, ColumnSlot, UpdateApplier};
use htap_core::consistency::{ColumnVersion, SnapshotManager};
use htap_core::harness::{
    generate_workload, mvcc_experiment, placement_experiment, propagation_experiment, run, snapshot_experiment, write_csv,
    SystemConfig, SystemKind, WorkloadSpec,
};
use htap_core::propagation::{gather_and_ship, merge_logs, ship, BufferedUpdate, HashIndex};
use htap_core::storage::{ColumnRef, EncodedColumn, NsmTable, RecordKey, Value};
use htap_core::txn::{CommitId, TxnEngine, TxnOp, UpdateKind, UpdateLogEntry};
use htap_core::vault::{Step, TopologyConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// Open queries: frozen copy of each column read, plus the pinned versions.
type Open = BTreeMap<u64, (BTreeMap<ColumnRef, Vec<Option<Value>>>, Vec<Arc<ColumnVersion>>)>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. optimized application matches the naive algorithm

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    for case in 0..1000 {
        let n = rng.gen_range(1..=10_000usize);
        let distinct = if rng.gen_bool(0.2) { rng.gen_range(1..=5000) } else { rng.gen_range(1..=64) };
        let vals: Vec<Option<Value>> =
            (0..n).map(|_| if rng.gen_bool(0.02) { None } else { Some(rng.gen_range(0..distinct as Value) * 3) }).collect();
        let col = EncodedColumn::encode_values(&vals);
        let m = rng.gen_range(0..=1024usize);
        let mut len = n as u64;
        let updates: Vec<BufferedUpdate> = (0..m)
            .map(|i| {
                let commit = CommitId(i as u64 + 1);
                let value = rng.gen_range(-50..distinct as Value * 4);
                let roll: f64 = rng.gen();
                let (kind, offset) = if roll < 0.05 {
                    len += 1;
                    (UpdateKind::Insert, len - 1)
                } else if roll < 0.1 {
                    (UpdateKind::Delete, rng.gen_range(0..len))
                } else {
                    (UpdateKind::Modify, rng.gen_range(0..len))
                };
                BufferedUpdate { row_id: offset, offset, kind, value, commit }
            })
            .collect();
        let naive = apply_naive(&col, &updates).map_err(|e| format!("case {case}: naive failed: {e}"))?;
        let opt = apply_optimized(&col, &updates).map_err(|e| format!("case {case}: optimized failed: {e}"))?;
        let a = naive.partitions[0].decode_all().map_err(|e| e.to_string())?;
        let b = opt.partitions[0].decode_all().map_err(|e| e.to_string())?;
        ensure(a == b, || format!("case {case}: decoded columns differ (n={n}, m={m})"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("1000 instances identical in {secs:.1}s"))
}

// ---------------------------------------------------------------------------
// 2. merge equals a global sort, shipping is lossless

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cols: Vec<ColumnRef> = (0..2).flat_map(|t| (0..3).map(move |c| ColumnRef::new(t, c))).collect();
    let rows = 64usize;
    let parts = [20usize, 20, 24];
    let index = HashIndex::build(cols.iter().map(|c| (*c, &parts[..])).collect::<Vec<_>>());
    for case in 0..500 {
        let threads = rng.gen_range(1..=12usize);
        let commits = rng.gen_range(0..=600u64);
        let mut logs: Vec<Vec<UpdateLogEntry>> = vec![Vec::new(); threads];
        for c in 1..=commits {
            let th = rng.gen_range(0..threads);
            for _ in 0..rng.gen_range(1..=4) {
                let col = cols[rng.gen_range(0..cols.len())];
                let key = RecordKey::new(col.table_id, rng.gen_range(0..rows) as u64, col.column_id);
                logs[th].push(UpdateLogEntry { commit: CommitId(c), kind: UpdateKind::Modify, data: rng.gen_range(0..100), key });
            }
        }
        let mut oracle: Vec<UpdateLogEntry> = logs.iter().flatten().copied().collect();
        oracle.sort_by_key(|e| e.commit);
        let refs: Vec<&[UpdateLogEntry]> = logs.iter().map(Vec::as_slice).collect();
        let merged = merge_logs(&refs, oracle.len().max(1)).map_err(|e| e.to_string())?;
        ensure(merged.final_log.entries == oracle, || format!("case {case}: merge differs from sort"))?;

        let shipped = ship(&merged.final_log, &index).map_err(|e| e.to_string())?;
        let total: usize = shipped.buffers.iter().map(|b| b.updates.len()).sum();
        ensure(total == oracle.len(), || format!("case {case}: shipped {total} of {}", oracle.len()))?;
        for b in &shipped.buffers {
            let col = b.location.column();
            let lo: u64 = parts[..b.location.partition as usize].iter().sum::<usize>() as u64;
            let want: Vec<(CommitId, u64, Value)> = oracle
                .iter()
                .filter(|e| e.key.column() == col && e.key.row_id >= lo && e.key.row_id < lo + parts[b.location.partition as usize] as u64)
                .map(|e| (e.commit, e.key.row_id, e.data))
                .collect();
            let got: Vec<(CommitId, u64, Value)> = b.updates.iter().map(|u| (u.commit, lo + u.offset, u.value)).collect();
            ensure(got == want, || format!("case {case}: buffer {:?} does not reproduce its slice of the log", b.location))?;
        }
    }
    Ok("500 log sets merged and shipped exactly".into())
}

// ---------------------------------------------------------------------------
// 3. replica equals the row store at every shipping watermark

type Rows = Vec<Vec<Option<Vec<Value>>>>;

struct Model {
    tables: Rows,
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n_tables, n_cols, n_rows, threads) = (2usize, 3usize, 2000usize, 4usize);
    let initial: Vec<Vec<Vec<Value>>> =
        (0..n_tables).map(|_| (0..n_rows).map(|_| (0..n_cols).map(|_| rng.gen_range(0..50)).collect()).collect()).collect();
    let tables: Vec<NsmTable> = initial
        .iter()
        .enumerate()
        .map(|(t, rows)| NsmTable::from_rows(t as u16, n_cols, rows.clone()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let mut engine = TxnEngine::new(tables, threads);
    let cfg = TopologyConfig::default();
    let cols: Vec<ColumnRef> = (0..n_tables).flat_map(|t| (0..n_cols).map(move |c| ColumnRef::new(t as u16, c as u16))).collect();
    let meta: Vec<(ColumnRef, usize, usize)> = cols.iter().map(|c| (*c, n_rows, 50)).collect();
    let placement = PlacementPlan::build(&meta, PlacementStrategy::Hybrid, &cfg);
    let mut slots: BTreeMap<ColumnRef, Vec<EncodedColumn>> = BTreeMap::new();
    for c in &cols {
        let vals: Vec<Option<Value>> = initial[c.table_id as usize].iter().map(|r| Some(r[c.column_id as usize])).collect();
        let whole = EncodedColumn::encode_values(&vals);
        let mut at = 0;
        let parts = placement
            .get(*c)
            .unwrap()
            .partition_lens()
            .iter()
            .map(|&n| {
                let p = EncodedColumn::new(whole.codes[at..at + n].to_vec(), whole.dict.clone());
                at += n;
                p
            })
            .collect();
        slots.insert(*c, parts);
    }
    let lens: Vec<(ColumnRef, Vec<usize>)> = cols.iter().map(|c| (*c, placement.get(*c).unwrap().partition_lens())).collect();
    let mut index = HashIndex::build(lens.iter().map(|(c, l)| (*c, l.as_slice())).collect::<Vec<_>>());
    let applier = UpdateApplier::default();

    // History of the test-side model: (commit, model after it).
    let mut model = Model { tables: initial.iter().map(|t| t.iter().cloned().map(Some).collect()).collect() };
    let mut history: Vec<(CommitId, Rows)> = Vec::new();
    let mut logged = 0usize;
    let mut rounds = 0usize;
    let mut q = 0usize;
    while logged < 100_000 || engine.pending_update_count() > 0 {
        if logged < 100_000 {
            let th = q % threads;
            q += 1;
            let t = rng.gen_range(0..n_tables);
            let live: Vec<usize> = (0..model.tables[t].len()).filter(|&r| model.tables[t][r].is_some()).collect();
            let roll: f64 = rng.gen();
            let ops: Vec<TxnOp> = if roll < 0.02 {
                vec![TxnOp::Insert { table: t as u16, values: (0..n_cols).map(|_| rng.gen_range(0..80)).collect() }]
            } else if roll < 0.03 && live.len() > 10 {
                vec![TxnOp::Delete { table: t as u16, row: *live.choose(&mut rng).unwrap() as u64 }]
            } else {
                let mut rows_used = BTreeSet::new();
                (0..rng.gen_range(1..=4))
                    .filter_map(|_| {
                        let r = *live.choose(&mut rng).unwrap();
                        let c = rng.gen_range(0..n_cols);
                        rows_used.insert((r, c)).then(|| TxnOp::Modify(RecordKey::new(t as u16, r as u64, c as u16), rng.gen_range(0..80)))
                    })
                    .collect()
            };
            let out = engine.execute_txn_query(th, &ops).map_err(|e| e.to_string())?;
            logged += out.logged;
            for op in &ops {
                match op {
                    TxnOp::Modify(k, v) => model.tables[t][k.row_id as usize].as_mut().unwrap()[k.column_id as usize] = *v,
                    TxnOp::Insert { values, .. } => model.tables[t].push(Some(values.clone())),
                    TxnOp::Delete { row, .. } => model.tables[t][*row as usize] = None,
                    TxnOp::Read(_) => {}
                }
            }
            if let Some(c) = out.commit {
                history.push((c, model.tables.clone()));
            }
            if !engine.should_propagate() {
                continue;
            }
        }
        let round = gather_and_ship(&mut engine, &mut index).map_err(|e| e.to_string())?;
        let Some(wm) = round.watermark() else { break };
        rounds += 1;
        let mut by_col: BTreeMap<ColumnRef, Vec<Vec<BufferedUpdate>>> = BTreeMap::new();
        for b in &round.buffers {
            let n = slots[&b.location.column()].len();
            by_col.entry(b.location.column()).or_insert_with(|| vec![Vec::new(); n])[b.location.partition as usize]
                .extend_from_slice(&b.updates);
        }
        for (c, bufs) in by_col {
            let refs: Vec<&[BufferedUpdate]> = bufs.iter().map(Vec::as_slice).collect();
            let applied = applier.apply(&slots[&c], &refs).map_err(|e| e.to_string())?;
            slots.insert(c, applied.partitions);
        }
        let pos = history.partition_point(|(c, _)| *c <= wm);
        let expect = &history[pos - 1].1;
        for c in &cols {
            let got: Vec<Option<Value>> =
                slots[c].iter().map(|p| p.decode_all()).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?.concat();
            let want: Vec<Option<Value>> =
                expect[c.table_id as usize].iter().map(|r| r.as_ref().map(|r| r[c.column_id as usize])).collect();
            ensure(got == want, || format!("round {rounds}: column {c:?} differs at watermark {wm:?}"))?;
        }
        history.drain(..pos - 1);
    }
    Ok(format!("{logged} updates over {rounds} rounds, every round cell-exact"))
}

// ---------------------------------------------------------------------------
// 4. snapshots are frozen and fully reclaimed

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = TopologyConfig::default();
    for case in 0..200 {
        let n_cols = rng.gen_range(1..=4u16);
        let rows = rng.gen_range(1..=300usize);
        let cols: Vec<ColumnRef> = (0..n_cols).map(|c| ColumnRef::new(0, c)).collect();
        let mut model: BTreeMap<ColumnRef, Vec<Option<Value>>> =
            cols.iter().map(|c| (*c, (0..rows).map(|_| Some(rng.gen_range(0..40))).collect())).collect();
        let mut mgr = SnapshotManager::new();
        let mut slots = BTreeMap::new();
        for c in &cols {
            let slot = Arc::new(ColumnSlot::new(vec![EncodedColumn::encode_values(&model[c])]));
            mgr.register(*c, slot.clone());
            slots.insert(*c, slot);
        }
        let meta: Vec<(ColumnRef, usize, usize)> = cols.iter().map(|c| (*c, rows, 40)).collect();
        let placement = PlacementPlan::build(&meta, PlacementStrategy::Local, &cfg);
        // query id -> (frozen copy, versions)
        let mut open = Open::new();
        let mut next_q = 0u64;
        for _ in 0..rng.gen_range(5..60) {
            match rng.gen_range(0..3) {
                0 => {
                    let c = cols[rng.gen_range(0..cols.len())];
                    let col = model.get_mut(&c).unwrap();
                    for _ in 0..rng.gen_range(1..=8) {
                        let r = rng.gen_range(0..rows);
                        col[r] = if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(0..60)) };
                    }
                    slots[&c].publish(vec![EncodedColumn::encode_values(col)]);
                    mgr.mark_dirty(c).map_err(|e| e.to_string())?;
                }
                1 => {
                    let want: Vec<ColumnRef> = cols.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
                    let want = if want.is_empty() { vec![cols[0]] } else { want };
                    let acq = mgr.acquire_snapshot(next_q, &want).map_err(|e| e.to_string())?;
                    let frozen = want.iter().map(|c| (*c, model[c].clone())).collect();
                    open.insert(next_q, (frozen, acq.versions));
                    next_q += 1;
                }
                _ => {
                    let Some(&q) = open.keys().choose(&mut rng) else { continue };
                    finish_query(q, &mut open, &mut mgr, &placement, &cfg, case)?;
                }
            }
        }
        for q in open.keys().copied().collect::<Vec<_>>() {
            finish_query(q, &mut open, &mut mgr, &placement, &cfg, case)?;
        }
        for c in &cols {
            let len = mgr.chain(*c).map_or(0, |ch| ch.len());
            ensure(len <= 1, || format!("case {case}: chain of {c:?} has {len} versions after release"))?;
        }
    }
    Ok("200 interleavings read frozen data; chains collapse to the head".into())
}


fn finish_query(q: u64, open: &mut Open, mgr: &mut SnapshotManager, placement: &PlacementPlan, cfg: &TopologyConfig, case: usize) -> Result<(), String> {
    let (frozen, versions) = open.remove(&q).unwrap();
    for v in &versions {
        let plan = QueryPlan::parse(&format!("AGG sum (SCAN T{}.C{})", v.column.table_id, v.column.column_id)).unwrap();
        let dag = decompose(&plan, placement, cfg).map_err(|e| e.to_string())?;
        let src: BTreeMap<ColumnRef, &htap_core::application::ColumnData> = [(v.column, &v.data)].into_iter().collect();
        let got = run_dag(&dag, &src).map_err(|e| e.to_string())?;
        let want = QueryResult::Scalar(Some(frozen[&v.column].iter().flatten().map(|&x| x as i128).sum()));
        ensure(got == want, || format!("case {case}: query {q} saw {got:?}, frozen copy gives {want:?}"))?;
        ensure(v.data.decode_all() == frozen[&v.column], || format!("case {case}: query {q} snapshot of {:?} changed", v.column))?;
    }
    mgr.release_snapshot(q).map_err(|e| e.to_string())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// 5. scheduler runs every task once and respects dependencies

fn random_dag(rng: &mut ChaCha8Rng, n_vaults: usize) -> TaskDag {
    let n = rng.gen_range(1..=60usize);
    let tasks: Vec<Task> = (0..n)
        .map(|id| {
            let mut deps: Vec<usize> = (0..id).filter(|_| rng.gen_bool((3.0 / (id as f64 + 1.0)).min(0.5))).collect();
            deps.dedup();
            Task {
                id,
                kind: TaskKind::Combine,
                home_vault: if rng.gen_bool(0.5) { rng.gen_range(0..4) } else { rng.gen_range(0..n_vaults) },
                inputs: deps.clone(),
                deps,
                fused_agg: None,
                rows: rng.gen_range(1..5000),
            }
        })
        .collect();
    let outputs = vec![n - 1];
    TaskDag { tasks, pipelines: Vec::new(), joins: Vec::new(), outputs, root_agg: None }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TopologyConfig::default();
    let mut executed = 0usize;
    for case in 0..500 {
        let dag = random_dag(&mut rng, cfg.n_vaults);
        for mode in [SchedulerMode::Basic, SchedulerMode::Optimized] {
            let cost = |t: &Task, _v: usize| vec![Step::Compute { ns: t.rows as f64 }];
            let trace = schedule(&dag, mode, &cfg, &cost).map_err(|e| e.to_string())?;
            let mut seen = vec![0usize; dag.len()];
            let mut span = vec![(0.0, 0.0); dag.len()];
            for e in &trace.entries {
                seen[e.task] += 1;
                span[e.task] = (e.start, e.end);
            }
            ensure(seen.iter().all(|&s| s == 1), || format!("case {case} {mode}: execution counts {seen:?}"))?;
            for t in &dag.tasks {
                for &d in &t.deps {
                    ensure(span[d].1 <= span[t.id].0, || format!("case {case} {mode}: task {} started before dependency {d} ended", t.id))?;
                }
            }
            executed += trace.entries.len();
        }
    }
    Ok(format!("500 DAGs in both modes, {executed} task executions checked"))
}

// ---------------------------------------------------------------------------
// 6-9. trend checks

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        let pts = placement_experiment(scale).map_err(|e| e.to_string())?;
        let get = |s: &str| pts.iter().find(|p| p.series == s).unwrap();
        let (l, d, h, hs) = (get("local"), get("distributed"), get("hybrid"), get("hybrid-sched"));
        let ratio = hs.anl_throughput / d.anl_throughput;
        notes.push(format!(
            "x{scale}: D/L={:.2} Hs/D={ratio:.3} latH/L={:.2} latD/L={:.1}",
            d.anl_throughput / l.anl_throughput,
            h.update_latency_ns / l.update_latency_ns,
            d.update_latency_ns / l.update_latency_ns
        ));
        ensure(d.anl_throughput >= 2.0 * l.anl_throughput, || format!("x{scale}: distributed below 2x local"))?;
        ensure((ratio - 1.0).abs() <= 0.15, || format!("x{scale}: hybrid+optimized is {ratio:.3}x distributed"))?;
        ensure(h.update_latency_ns <= 1.2 * l.update_latency_ns, || format!("x{scale}: hybrid update latency above 1.2x local"))?;
        ensure(d.update_latency_ns >= 1.3 * l.update_latency_ns, || format!("x{scale}: distributed update latency below 1.3x local"))?;
    }
    Ok(notes.join("; "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" > ")
}

fn criterion_7() -> Outcome {
    let pts = snapshot_experiment().map_err(|e| e.to_string())?;
    let norm: Vec<f64> = pts.iter().map(|p| p.normalized_txn_throughput).collect();
    ensure(strictly_decreasing(&norm), || format!("normalized txn throughput {norm:?}"))?;
    Ok(format!("normalized txn throughput at 8/16/32 queries: {}", fmt(&norm)))
}

fn criterion_8() -> Outcome {
    let pts = mvcc_experiment().map_err(|e| e.to_string())?;
    let norm: Vec<f64> = pts.iter().map(|p| p.normalized_anl_throughput).collect();
    let chain: Vec<f64> = pts.iter().map(|p| p.mean_chain_length).collect();
    ensure(non_increasing(&norm), || format!("normalized anl throughput {norm:?}"))?;
    ensure(chain.windows(2).all(|w| w[1] > w[0]), || format!("mean chain length {chain:?}"))?;
    Ok(format!("normalized anl throughput {}; mean chain length {chain:.4?}", fmt(&norm)))
}

fn criterion_9() -> Outcome {
    let pts = propagation_experiment().map_err(|e| e.to_string())?;
    let mi: Vec<f64> = pts.iter().map(|p| p.mi_sw_normalized_txn).collect();
    let po: Vec<f64> = pts.iter().map(|p| p.polynesia_normalized_txn).collect();
    ensure(non_increasing(&mi), || format!("mi-sw normalized txn throughput {mi:?}"))?;
    for p in &pts {
        ensure(1.0 - p.polynesia_normalized_txn < 1.0 - p.mi_sw_normalized_txn, || format!("u={}: polynesia loses at least as much", p.update_ratio))?;
    }
    Ok(format!("mi-sw {}; polynesia {}", fmt(&mi), fmt(&po)))
}

// ---------------------------------------------------------------------------
// 10. determinism

fn criterion_10() -> Outcome {
    let spec = WorkloadSpec { txn_queries_per_thread: 400, anl_queries_per_thread: 4, seed: 11, ..WorkloadSpec::default() };
    let csv = || -> Result<Vec<u8>, String> {
        let w = generate_workload(&spec).map_err(|e| e.to_string())?;
        let mut reports = Vec::new();
        for kind in SystemKind::ALL {
            for ideal in [false, true] {
                let mut sys = SystemConfig::new(kind);
                sys.ideal = ideal;
                reports.push(run(&sys, &w).map_err(|e| e.to_string())?.report);
            }
        }
        let mut buf = Vec::new();
        write_csv(&reports, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let (a, b) = (csv()?, csv()?);
    ensure(a == b, || "repeated runs wrote different CSV".into())?;
    Ok(format!("{} identical CSV bytes over 8 runs", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("application oracle equivalence", criterion_1),
        ("propagation round trip", criterion_2),
        ("freshness at every watermark", criterion_3),
        ("snapshot isolation and reclamation", criterion_4),
        ("scheduler exactly-once and dependency safety", criterion_5),
        ("placement trend", criterion_6),
        ("snapshotting cost trend", criterion_7),
        ("version chain trend", criterion_8),
        ("propagation overhead trend", criterion_9),
        ("determinism", criterion_10),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (i, &(name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(note) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {note}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    let total = suite.elapsed().as_secs_f64();
    println!("acceptance suite finished in {total:.1}s, {failed} failed");
    if total >= 600.0 {
        println!("criterion 10 FAIL  suite runtime {total:.0}s exceeds 10 minutes");
        failed += 1;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

