//! Event-driven execution of one system over one workload.
//!
//! Every actor (transactional thread, analytical stream, in-memory worker
//! thread, per-vault application unit, propagation unit) owns a queue of
//! cost steps. An event for an actor runs its front step against the shared
//! [`Resources`]; when the queue is empty the actor's state machine decides
//! what happens next. Functional effects happen at well-defined instants:
//! a transactional query commits when its steps finish, an analytical query
//! pins its data when it starts, and a propagation round becomes visible
//! when its last column is applied.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::analytics::{
    decompose, run_dag, task_steps, ColumnSource, DictInfo, PlacementPlan, PlacementStrategy, QueryPlan, QueryResult, Scheduler,
    SchedulerMode, TaskDag,
};
use crate::application::{Applied, ColumnData, ColumnSlot, UpdateApplier};
use crate::consistency::{mvcc_read, FullCopySnapshotter, MvccStore, SnapshotManager};
use crate::propagation::{gather_and_ship, BufferedUpdate, ColumnBuffer, HashIndex, PropagationStats};
use crate::storage::{ColumnRef, EncodedColumn, RecordKey, Value};
use crate::txn::{CommitId, TxnEngine, TxnOp, UpdateLogEntry};
use crate::vault::{EventQueue, Origin, Progress, Resources, Step, TopologyConfig, VaultId};
use crate::Error;

use super::metrics::{answer_digest, MetricsReport, QueryRecord, RunOutput};
use super::workload::Workload;
use super::{SystemConfig, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actor {
    Txn(usize),
    Anl(usize),
    Pim(usize),
    Unit(usize),
    Prop,
}

impl Actor {
    fn resource(self) -> u32 {
        match self {
            Actor::Txn(i) => i as u32,
            Actor::Anl(i) => 1 << 20 | i as u32,
            Actor::Pim(i) => 2 << 20 | i as u32,
            Actor::Unit(i) => 3 << 20 | i as u32,
            Actor::Prop => 4 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxnPhase {
    Idle,
    Query(usize),
    Blocked,
    Gather,
    Apply,
    Done,
}

struct TxnThread {
    next: usize,
    phase: TxnPhase,
    steps: VecDeque<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnlPhase {
    Idle,
    Copy,
    Run,
    Done,
}

struct ActiveQuery {
    id: u64,
    index: usize,
    plan: QueryPlan,
    watermark: CommitId,
    answer: Option<QueryResult>,
    dag: Arc<TaskDag>,
    dicts: BTreeMap<ColumnRef, DictInfo>,
    task_base: usize,
    remaining: usize,
    mvcc_ts: u64,
    next_row: usize,
}

struct AnlThread {
    next: usize,
    phase: AnlPhase,
    steps: VecDeque<Step>,
    query: Option<ActiveQuery>,
}

struct PimThread {
    steps: VecDeque<Step>,
    task: Option<usize>,
}

struct Job {
    column: usize,
    merge: bool,
    steps: Vec<Step>,
}

#[derive(Default)]
struct Unit {
    queue: VecDeque<Job>,
    current: Option<(usize, bool)>,
    steps: VecDeque<Step>,
}

struct RoundColumn {
    column: ColumnRef,
    old: Vec<EncodedColumn>,
    updates: Vec<usize>,
    applied: Applied,
    remaining: usize,
}

struct Round {
    watermark: CommitId,
    columns: Vec<RoundColumn>,
    stats: PropagationStats,
    buffers: Vec<ColumnBuffer>,
    app_start: f64,
    left: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PropPhase {
    Idle,
    Gather,
    Apply,
}

struct Sim<'a> {
    sys: &'a SystemConfig,
    cfg: TopologyConfig,
    w: &'a Workload,
    res: Resources,
    events: EventQueue<Actor>,
    engine: TxnEngine,
    placement: PlacementPlan,
    log_vault: VaultId,

    slots: BTreeMap<ColumnRef, Arc<ColumnSlot>>,
    index: HashIndex,
    snaps: SnapshotManager,
    applier: UpdateApplier,
    published: CommitId,
    prop_busy: bool,
    round: Option<Round>,
    prop_phase: PropPhase,
    prop_steps: VecDeque<Step>,
    units: Vec<Unit>,

    full: FullCopySnapshotter,
    ss_snapshot: Option<(Arc<BTreeMap<ColumnRef, ColumnData>>, CommitId)>,
    latch: usize,
    latch_waiters: Vec<usize>,

    mvcc: MvccStore,
    chain_sum: u64,
    chain_reads: u64,

    txn: Vec<TxnThread>,
    anl: Vec<AnlThread>,
    pim: Vec<PimThread>,
    pim_idle: BTreeSet<usize>,
    sched: Scheduler,
    task_stream: Vec<usize>,

    next_qid: u64,
    txn_done: u64,
    txn_last: f64,
    anl_done: u64,
    anl_last: f64,
    latencies: Vec<f64>,
    records: Vec<QueryRecord>,
}

fn project(w: &Workload, engine: &TxnEngine) -> BTreeMap<ColumnRef, ColumnData> {
    w.columns()
        .into_iter()
        .map(|c| {
            let t = engine.table(c.table_id).expect("workload tables exist");
            let enc = EncodedColumn::encode_values(&t.column(c.column_id));
            (c, ColumnData { version: 0, partitions: vec![enc] })
        })
        .collect()
}

fn split(enc: EncodedColumn, lens: &[usize]) -> Vec<EncodedColumn> {
    let mut start = 0;
    lens.iter()
        .map(|&n| {
            let p = EncodedColumn::new(enc.codes[start..start + n].to_vec(), enc.dict.clone());
            start += n;
            p
        })
        .collect()
}

fn dict_infos(src: &dyn ColumnSource, cols: &[ColumnRef]) -> BTreeMap<ColumnRef, DictInfo> {
    cols.iter()
        .filter_map(|&c| {
            let d = src.column(c)?.dict();
            Some((c, DictInfo { len: d.len(), width_bits: d.width_bits() }))
        })
        .collect()
}

impl<'a> Sim<'a> {
    fn new(sys: &'a SystemConfig, w: &'a Workload) -> Result<Self, Error> {
        let cfg = sys.topology.clone();
        let engine = TxnEngine::new(w.tables.clone(), w.spec.txn_threads);
        let strategy = if sys.system.uses_vaults() { sys.placement } else { PlacementStrategy::Local };
        let initial = project(w, &engine);
        let meta: Vec<(ColumnRef, usize, usize)> = initial.iter().map(|(c, d)| (*c, d.n_rows(), d.dict().len())).collect();
        let placement = PlacementPlan::build(&meta, strategy, &cfg);

        let mut slots = BTreeMap::new();
        let mut snaps = SnapshotManager::new();
        let mut lens = Vec::new();
        for (c, data) in initial {
            let cp = placement.get(c).expect("every column is placed");
            let parts = split(data.partitions.into_iter().next().expect("one partition"), &cp.partition_lens());
            let slot = Arc::new(ColumnSlot::new(parts));
            snaps.register(c, slot.clone());
            slots.insert(c, slot);
            lens.push((c, cp.partition_lens()));
        }
        let index = if sys.system.has_replica() {
            HashIndex::build(lens.iter().map(|(c, l)| (*c, l.as_slice())).collect::<Vec<_>>())
        } else {
            HashIndex::with_buckets(1)
        };
        let sched = Scheduler::new(sys.scheduler, &cfg);
        let n_threads = sched.n_threads();
        Ok(Sim {
            sys,
            res: Resources::new(cfg.clone()),
            log_vault: cfg.n_vaults - 1,
            units: (0..cfg.n_vaults).map(|_| Unit::default()).collect(),
            applier: UpdateApplier { compaction_factor: Some(cfg.compaction_factor) },
            cfg,
            w,
            events: EventQueue::new(),
            engine,
            placement,
            slots,
            index,
            snaps,
            published: CommitId(0),
            prop_busy: false,
            round: None,
            prop_phase: PropPhase::Idle,
            prop_steps: VecDeque::new(),
            full: FullCopySnapshotter::new(),
            ss_snapshot: None,
            latch: 0,
            latch_waiters: Vec::new(),
            mvcc: MvccStore::new(),
            chain_sum: 0,
            chain_reads: 0,
            txn: (0..w.spec.txn_threads).map(|_| TxnThread { next: 0, phase: TxnPhase::Idle, steps: VecDeque::new() }).collect(),
            anl: (0..w.spec.anl_threads)
                .map(|_| AnlThread { next: 0, phase: AnlPhase::Idle, steps: VecDeque::new(), query: None })
                .collect(),
            pim: (0..n_threads).map(|_| PimThread { steps: VecDeque::new(), task: None }).collect(),
            pim_idle: (0..n_threads).collect(),
            sched,
            task_stream: Vec::new(),
            next_qid: 0,
            txn_done: 0,
            txn_last: 0.0,
            anl_done: 0,
            anl_last: 0.0,
            latencies: Vec::new(),
            records: Vec::new(),
        })
    }

    fn wake(&mut self, a: Actor, t: f64) -> Result<(), Error> {
        self.events.push(t, a.resource(), a)?;
        Ok(())
    }

    fn run(&mut self) -> Result<(), Error> {
        for i in 0..self.txn.len() {
            self.wake(Actor::Txn(i), 0.0)?;
        }
        for j in 0..self.anl.len() {
            self.wake(Actor::Anl(j), 0.0)?;
        }
        while let Some(ev) = self.events.advance() {
            let (t, a) = (ev.time, ev.payload);
            let lane = match a {
                Actor::Txn(i) => &mut self.txn[i].steps,
                Actor::Anl(j) => &mut self.anl[j].steps,
                Actor::Pim(p) => &mut self.pim[p].steps,
                Actor::Unit(v) => &mut self.units[v].steps,
                Actor::Prop => &mut self.prop_steps,
            };
            if let Some(step) = lane.front_mut() {
                let p = self.res.perform(t, step)?;
                if let Progress::Done(_) = p {
                    lane.pop_front();
                }
                self.wake(a, p.time())?;
                continue;
            }
            match a {
                Actor::Txn(i) => self.txn_continue(i, t)?,
                Actor::Anl(j) => self.anl_continue(j, t)?,
                Actor::Pim(p) => self.pim_continue(p, t)?,
                Actor::Unit(v) => self.unit_continue(v, t)?,
                Actor::Prop => self.prop_continue(t)?,
            }
        }
        Ok(())
    }

    // ---- transactional threads ----

    fn next_query(&mut self, i: usize, t: f64) -> Result<(), Error> {
        let th = &mut self.txn[i];
        if th.next >= self.w.txn_streams[i].len() {
            th.phase = TxnPhase::Done;
            return Ok(());
        }
        if self.latch > 0 {
            th.phase = TxnPhase::Blocked;
            self.latch_waiters.push(i);
            return Ok(());
        }
        let q = th.next;
        th.next += 1;
        let ops = &self.w.txn_streams[i][q];
        let n = ops.len() as u64;
        let writes = ops.iter().filter(|o| o.is_write()).count() as u64;
        // version installs cost one extra dependent access per write
        let extra = if self.sys.system == SystemKind::SiMvcc { writes } else { 0 };
        th.steps.push_back(Step::HostRandom { count: n + extra });
        th.steps.push_back(Step::Compute { ns: n as f64 * self.cfg.host_ns_per_tuple });
        th.phase = TxnPhase::Query(q);
        self.wake(Actor::Txn(i), t)
    }

    fn txn_continue(&mut self, i: usize, t: f64) -> Result<(), Error> {
        match self.txn[i].phase {
            TxnPhase::Idle | TxnPhase::Blocked => self.next_query(i, t),
            TxnPhase::Query(q) => self.commit(i, q, t),
            TxnPhase::Gather => {
                let steps = if self.sys.ideal { Vec::new() } else { self.host_apply_steps() };
                if let Some(r) = self.round.as_mut() {
                    r.app_start = t;
                }
                let th = &mut self.txn[i];
                th.steps.extend(steps);
                th.phase = TxnPhase::Apply;
                self.wake(Actor::Txn(i), t)
            }
            TxnPhase::Apply => {
                self.publish(t)?;
                self.host_round_or_continue(i, t)
            }
            TxnPhase::Done => Ok(()),
        }
    }

    fn commit(&mut self, i: usize, q: usize, t: f64) -> Result<(), Error> {
        let ops = &self.w.txn_streams[i][q];
        let mut versions: BTreeMap<RecordKey, (Value, Value)> = BTreeMap::new();
        if self.sys.system == SystemKind::SiMvcc {
            for op in ops {
                if let TxnOp::Modify(k, v) = op {
                    if let Some(old) = self.engine.table(k.table_id).and_then(|tb| tb.get(k.row_id, k.column_id)) {
                        versions.entry(*k).or_insert((old, *v)).1 = *v;
                    }
                }
            }
        }
        let out = self.engine.execute_txn_query(i, ops)?;
        self.txn_done += 1;
        self.txn_last = t;
        if let Some(c) = out.commit {
            for (k, (old, new)) in versions {
                self.mvcc.write(k, c.0, new, old)?;
            }
        }
        if out.logged > 0 {
            match self.sys.system {
                SystemKind::SiSs => self.full.mark_dirty(),
                SystemKind::Polynesia | SystemKind::MiSw if !self.sys.ideal => {
                    // posted write of the log entries into the log vault
                    let bytes = out.logged as u64 * UpdateLogEntry::BYTES;
                    self.res.charge_access(t, self.log_vault, bytes, Origin::Host)?;
                }
                _ => {}
            }
        }
        match self.sys.system {
            SystemKind::Polynesia => {
                if !self.prop_busy && self.engine.should_propagate() {
                    self.start_pim_round(t)?;
                }
                self.next_query(i, t)
            }
            SystemKind::MiSw => self.host_round_or_continue(i, t),
            _ => self.next_query(i, t),
        }
    }

    /// The calling thread propagates synchronously while enough updates
    /// are pending and nobody else is propagating.
    fn host_round_or_continue(&mut self, i: usize, t: f64) -> Result<(), Error> {
        if self.prop_busy || !self.engine.should_propagate() {
            return self.next_query(i, t);
        }
        let Some(round) = self.build_round()? else { return self.next_query(i, t) };
        self.prop_busy = true;
        let steps = if self.sys.ideal { Vec::new() } else { self.host_gather_steps(&round) };
        self.round = Some(round);
        let th = &mut self.txn[i];
        th.steps.extend(steps);
        th.phase = TxnPhase::Gather;
        self.wake(Actor::Txn(i), t)
    }

    // ---- propagation and application ----

    fn build_round(&mut self) -> Result<Option<Round>, Error> {
        let r = gather_and_ship(&mut self.engine, &mut self.index)?;
        let Some(watermark) = r.watermark() else { return Ok(None) };
        let mut by_col: BTreeMap<ColumnRef, Vec<Vec<BufferedUpdate>>> = BTreeMap::new();
        for b in &r.buffers {
            let c = b.location.column();
            let n = self.placement.get(c).map_or(1, |cp| cp.partitions.len());
            by_col.entry(c).or_insert_with(|| vec![Vec::new(); n])[b.location.partition as usize].extend_from_slice(&b.updates);
        }
        let mut columns = Vec::with_capacity(by_col.len());
        for (c, bufs) in by_col {
            let old = self.slots[&c].load().partitions.clone();
            let refs: Vec<&[BufferedUpdate]> = bufs.iter().map(Vec::as_slice).collect();
            let applied = self.applier.apply(&old, &refs)?;
            let updates = bufs.iter().map(Vec::len).collect();
            columns.push(RoundColumn { column: c, old, updates, applied, remaining: 0 });
        }
        let left = columns.len();
        Ok(Some(Round { watermark, columns, stats: r.stats, buffers: r.buffers, app_start: 0.0, left }))
    }

    fn publish(&mut self, t: f64) -> Result<(), Error> {
        let round = self.round.take().expect("publishing an active round");
        for rc in round.columns {
            self.slots[&rc.column].publish(rc.applied.partitions);
            self.snaps.mark_dirty(rc.column)?;
        }
        self.published = round.watermark;
        self.latencies.push(t - round.app_start);
        self.prop_busy = false;
        Ok(())
    }

    fn host_gather_steps(&self, r: &Round) -> Vec<Step> {
        let c = &self.cfg;
        let probes: u64 = r.stats.probe_nodes.iter().map(|&n| n as u64).sum();
        vec![
            Step::Host { bytes: r.stats.log_bytes() },
            Step::Compute { ns: r.stats.comparisons as f64 * c.host_ns_per_tuple },
            Step::HostRandom { count: probes },
            Step::Host { bytes: r.buffers.iter().map(ColumnBuffer::byte_size).sum() },
        ]
    }

    fn host_apply_steps(&self) -> Vec<Step> {
        let c = &self.cfg;
        let r = self.round.as_ref().expect("active round");
        let mut steps = Vec::new();
        for rc in &r.columns {
            let passes = rc.applied.rounds.max(1);
            steps.push(Step::Compute { ns: rc.applied.cost.comparisons as f64 * c.host_ns_per_tuple });
            for (i, old) in rc.old.iter().enumerate() {
                steps.push(Step::Host { bytes: old.byte_size() });
                steps.push(Step::Compute { ns: (old.len() * passes) as f64 * c.host_ns_per_tuple });
                steps.push(Step::HostRandom { count: rc.updates[i] as u64 });
                steps.push(Step::Host { bytes: rc.applied.partitions[i].byte_size() });
            }
        }
        steps
    }

    fn start_pim_round(&mut self, t: f64) -> Result<(), Error> {
        let Some(round) = self.build_round()? else { return Ok(()) };
        self.prop_busy = true;
        if !self.sys.ideal {
            let (l, o) = (self.log_vault, Origin::Vault(self.log_vault));
            let probes: u64 = round.stats.probe_nodes.iter().map(|&n| n as u64).sum();
            self.prop_steps.push_back(Step::Access { vault: l, bytes: round.stats.log_bytes(), origin: o });
            self.prop_steps.push_back(Step::Compute { ns: round.stats.comparisons as f64 * self.cfg.merge_ns_per_level });
            self.prop_steps.push_back(Step::Random { vault: l, origin: o, count: probes.div_ceil(self.cfg.hash_probe_units as u64) });
            for b in &round.buffers {
                let cp = self.placement.get(b.location.column()).expect("placed");
                let dst = cp.partitions[b.location.partition as usize].vault;
                self.prop_steps.push_back(Step::Copy { src: l, dst, bytes: b.byte_size() });
            }
        }
        self.round = Some(round);
        self.prop_phase = PropPhase::Gather;
        self.wake(Actor::Prop, t)
    }

    fn prop_continue(&mut self, t: f64) -> Result<(), Error> {
        if self.prop_phase != PropPhase::Gather {
            return Ok(());
        }
        self.prop_phase = PropPhase::Apply;
        let round = self.round.as_mut().expect("active round");
        round.app_start = t;
        if self.sys.ideal || round.left == 0 {
            return self.finish_pim_round(t);
        }
        let mut jobs = Vec::new();
        for (ci, rc) in round.columns.iter().enumerate() {
            let cp = self.placement.get(rc.column).expect("placed");
            let owner = cp.dict_owner;
            let dict_bytes = rc.applied.partitions.first().map_or(0, |p| p.dict.byte_size());
            let mut steps = vec![Step::Compute { ns: rc.applied.cost.comparisons as f64 * self.cfg.merge_ns_per_level }];
            for &dv in cp.dict_vaults.iter().filter(|&&v| v != owner) {
                steps.push(Step::Copy { src: owner, dst: dv, bytes: dict_bytes });
            }
            jobs.push((owner, Job { column: ci, merge: true, steps }));
        }
        for (v, job) in jobs {
            self.push_job(v, job, t)?;
        }
        Ok(())
    }

    fn finish_pim_round(&mut self, t: f64) -> Result<(), Error> {
        self.publish(t)?;
        self.prop_phase = PropPhase::Idle;
        if self.engine.should_propagate() {
            self.start_pim_round(t)?;
        }
        Ok(())
    }

    fn push_job(&mut self, v: VaultId, job: Job, t: f64) -> Result<(), Error> {
        let u = &mut self.units[v];
        u.queue.push_back(job);
        if u.current.is_none() {
            self.unit_next(v, t)?;
        }
        Ok(())
    }

    fn unit_next(&mut self, v: VaultId, t: f64) -> Result<(), Error> {
        let u = &mut self.units[v];
        match u.queue.pop_front() {
            Some(job) => {
                u.current = Some((job.column, job.merge));
                u.steps.extend(job.steps);
                self.wake(Actor::Unit(v), t)
            }
            None => {
                u.current = None;
                Ok(())
            }
        }
    }

    fn part_steps(&self, rc: &RoundColumn, i: usize) -> (VaultId, Vec<Step>) {
        let c = &self.cfg;
        let cp = self.placement.get(rc.column).expect("placed");
        let v = cp.partitions[i].vault;
        let o = Origin::Vault(v);
        let rows = rc.old[i].len() as u64 * rc.applied.rounds.max(1) as u64;
        let upd = rc.updates[i] as u64;
        let mut steps = Vec::new();
        if upd > 0 {
            steps.push(Step::Access { vault: v, bytes: upd * UpdateLogEntry::BYTES, origin: o });
        }
        steps.push(Step::Access { vault: v, bytes: rc.old[i].byte_size(), origin: o });
        if cp.has_dict(v) {
            steps.push(Step::Compute { ns: rows as f64 * c.recode_ns });
        } else {
            steps.push(Step::Random { vault: cp.dict_owner, origin: o, count: rows });
        }
        steps.push(Step::Compute { ns: upd as f64 * c.recode_ns });
        steps.push(Step::Access { vault: v, bytes: rc.applied.partitions[i].byte_size(), origin: o });
        (v, steps)
    }

    fn unit_continue(&mut self, v: VaultId, t: f64) -> Result<(), Error> {
        let Some((ci, merge)) = self.units[v].current else { return Ok(()) };
        let round = self.round.as_ref().expect("units only run during a round");
        if merge {
            let rc = &round.columns[ci];
            let jobs: Vec<_> = (0..rc.old.len()).map(|i| self.part_steps(rc, i)).collect();
            self.round.as_mut().expect("active").columns[ci].remaining = jobs.len();
            for (pv, steps) in jobs {
                self.push_job(pv, Job { column: ci, merge: false, steps }, t)?;
            }
        } else {
            let round = self.round.as_mut().expect("active");
            round.columns[ci].remaining -= 1;
            if round.columns[ci].remaining == 0 {
                round.left -= 1;
                if round.left == 0 {
                    self.unit_next(v, t)?;
                    return self.finish_pim_round(t);
                }
            }
        }
        self.unit_next(v, t)
    }

    // ---- analytical streams ----

    fn start_query(&mut self, j: usize, t: f64) -> Result<(), Error> {
        let index = self.anl[j].next;
        let Some(plan) = self.w.anl_streams[j].get(index).cloned() else {
            self.anl[j].phase = AnlPhase::Done;
            return Ok(());
        };
        self.anl[j].next += 1;
        let id = self.next_qid;
        self.next_qid += 1;
        let cols = plan.columns();
        let dag = Arc::new(decompose(&plan, &self.placement, &self.cfg)?);
        let mut q = ActiveQuery {
            id,
            index,
            plan,
            watermark: CommitId(0),
            answer: None,
            dag,
            dicts: BTreeMap::new(),
            task_base: 0,
            remaining: 0,
            mvcc_ts: 0,
            next_row: 0,
        };
        let mut steps = Vec::new();
        match self.sys.system {
            SystemKind::Polynesia | SystemKind::MiSw => {
                let dirty: BTreeSet<ColumnRef> =
                    cols.iter().copied().filter(|c| self.snaps.chain(*c).is_some_and(|ch| ch.is_dirty())).collect();
                let acq = self.snaps.acquire_snapshot(id, &cols)?;
                let src: BTreeMap<ColumnRef, &ColumnData> = acq.versions.iter().map(|v| (v.column, &v.data)).collect();
                q.answer = Some(run_dag(&q.dag, &src)?);
                q.dicts = dict_infos(&src, &cols);
                q.watermark = self.published;
                if !self.sys.ideal {
                    if self.sys.system == SystemKind::Polynesia {
                        for v in acq.versions.iter().filter(|v| dirty.contains(&v.column)) {
                            let cp = self.placement.get(v.column).expect("placed");
                            for (p, part) in cp.partitions.iter().zip(&v.data.partitions) {
                                steps.push(Step::Copy { src: p.vault, dst: p.vault, bytes: part.byte_size() });
                            }
                        }
                    } else if acq.copied_bytes > 0 {
                        steps.push(Step::Host { bytes: acq.copied_bytes });
                    }
                }
            }
            SystemKind::SiSs => {
                let bytes: u64 = self.engine.tables().iter().map(|tb| tb.byte_size()).sum();
                if self.full.snapshot_if_dirty(bytes).is_some() || self.ss_snapshot.is_none() {
                    self.ss_snapshot = Some((Arc::new(project(self.w, &self.engine)), self.engine.last_commit()));
                    if !self.sys.ideal {
                        steps.push(Step::Host { bytes });
                        self.latch += 1;
                    }
                }
                let (snap, wm) = self.ss_snapshot.as_ref().expect("taken above");
                q.answer = Some(run_dag(&q.dag, snap.as_ref())?);
                q.watermark = *wm;
            }
            SystemKind::SiMvcc => {
                q.mvcc_ts = self.engine.last_commit().0;
                q.watermark = self.engine.last_commit();
            }
        }
        let a = &mut self.anl[j];
        a.steps.extend(steps);
        a.query = Some(q);
        a.phase = AnlPhase::Copy;
        self.wake(Actor::Anl(j), t)
    }

    fn host_scan_steps(&self, q: &ActiveQuery) -> Vec<Step> {
        let rows = self.w.spec.rows as u64;
        let mut steps = Vec::new();
        let mut tuples = 0u64;
        for c in q.plan.columns() {
            let bytes = match self.sys.system {
                SystemKind::MiSw => self.snaps.chain(c).map_or(0, |ch| ch.head().data.byte_size()),
                _ => rows * 8,
            };
            steps.push(Step::Host { bytes });
            tuples += rows;
        }
        steps.push(Step::Compute { ns: tuples as f64 * self.cfg.host_ns_per_tuple });
        steps
    }

    /// Cost of reading the next segment through the version chains, using
    /// the chains as they are now.
    fn mvcc_segment(&mut self, j: usize) -> Result<Option<Vec<Step>>, Error> {
        let rows = self.w.spec.rows;
        let seg = self.cfg.segment_rows.max(1);
        let q = self.anl[j].query.as_mut().expect("active query");
        if q.next_row >= rows {
            return Ok(None);
        }
        let (a, b) = (q.next_row, (q.next_row + seg).min(rows));
        q.next_row = b;
        let cols = q.plan.columns();
        let ts = q.mvcc_ts;
        let mut extra = 0u64;
        for c in &cols {
            for r in a..b {
                let key = RecordKey::new(c.table_id, r as u64, c.column_id);
                let n = self.mvcc.read(&key, ts)?.map_or(1, |rd| rd.traversed as u64);
                self.chain_sum += self.mvcc.chain(&key).map_or(1, |ch| ch.len() as u64);
                self.chain_reads += 1;
                extra += n - 1;
            }
        }
        let n = (b - a) as u64 * cols.len() as u64;
        let mut steps = vec![Step::Host { bytes: n * 8 }];
        if !self.sys.ideal && extra > 0 {
            steps.push(Step::HostRandom { count: extra });
        }
        steps.push(Step::Compute { ns: n as f64 * self.cfg.host_ns_per_tuple });
        Ok(Some(steps))
    }

    fn mvcc_answer(&self, plan: &QueryPlan, dag: &TaskDag, ts: u64) -> Result<QueryResult, Error> {
        let mut src = BTreeMap::new();
        for c in plan.columns() {
            let t = self.engine.table(c.table_id).expect("workload tables exist");
            let mut vals = Vec::with_capacity(t.n_rows());
            for r in 0..t.n_rows() as u64 {
                let key = RecordKey::new(c.table_id, r, c.column_id);
                vals.push(match self.mvcc.chain(&key) {
                    Some(ch) => Some(mvcc_read(ch, ts)?.value),
                    None => t.get(r, c.column_id),
                });
            }
            src.insert(c, ColumnData { version: 0, partitions: vec![EncodedColumn::encode_values(&vals)] });
        }
        Ok(run_dag(dag, &src)?)
    }

    fn anl_continue(&mut self, j: usize, t: f64) -> Result<(), Error> {
        match self.anl[j].phase {
            AnlPhase::Idle => self.start_query(j, t),
            AnlPhase::Copy => {
                self.anl[j].phase = AnlPhase::Run;
                match self.sys.system {
                    SystemKind::Polynesia => {
                        let q = self.anl[j].query.as_mut().expect("active query");
                        if q.dag.is_empty() {
                            return self.finish_query(j, t);
                        }
                        q.task_base = self.sched.submit(&q.dag)?;
                        q.remaining = q.dag.len();
                        self.task_stream.resize(q.task_base + q.dag.len(), j);
                        self.pim_dispatch(t)
                    }
                    SystemKind::SiSs | SystemKind::MiSw => {
                        if self.sys.system == SystemKind::SiSs && self.latch > 0 && !self.sys.ideal {
                            self.release_latch(t)?;
                        }
                        let steps = self.host_scan_steps(self.anl[j].query.as_ref().expect("active query"));
                        self.anl[j].steps.extend(steps);
                        self.wake(Actor::Anl(j), t)
                    }
                    SystemKind::SiMvcc => self.anl_continue(j, t),
                }
            }
            AnlPhase::Run => {
                if self.sys.system == SystemKind::SiMvcc {
                    if let Some(steps) = self.mvcc_segment(j)? {
                        self.anl[j].steps.extend(steps);
                        return self.wake(Actor::Anl(j), t);
                    }
                }
                self.finish_query(j, t)
            }
            AnlPhase::Done => Ok(()),
        }
    }

    fn release_latch(&mut self, t: f64) -> Result<(), Error> {
        self.latch -= 1;
        if self.latch == 0 {
            for i in std::mem::take(&mut self.latch_waiters) {
                self.wake(Actor::Txn(i), t)?;
            }
        }
        Ok(())
    }

    fn finish_query(&mut self, j: usize, t: f64) -> Result<(), Error> {
        let q = self.anl[j].query.take().expect("active query");
        let answer = match q.answer {
            Some(a) => a,
            None => self.mvcc_answer(&q.plan, &q.dag, q.mvcc_ts)?,
        };
        if self.sys.system.has_replica() {
            self.snaps.release_snapshot(q.id)?;
        }
        self.records.push(QueryRecord { stream: j, index: q.index, plan: q.plan.to_string(), watermark: q.watermark, answer });
        self.anl_done += 1;
        self.anl_last = t;
        self.anl[j].phase = AnlPhase::Idle;
        self.start_query(j, t)
    }

    // ---- in-memory worker threads ----

    fn pim_dispatch(&mut self, t: f64) -> Result<(), Error> {
        if self.sched.queued() == 0 {
            return Ok(());
        }
        let idle: Vec<usize> = self.pim_idle.iter().copied().collect();
        for th in idle {
            let Some(a) = self.sched.next_task(th) else { continue };
            self.pim_idle.remove(&th);
            let j = self.task_stream[a.task];
            let q = self.anl[j].query.as_ref().expect("tasks belong to active queries");
            let task = &q.dag.tasks[a.task - q.task_base];
            let dicts = &q.dicts;
            let info = |c: ColumnRef| dicts.get(&c).copied().unwrap_or(DictInfo { len: 1, width_bits: 1 });
            let mut steps = task_steps(&q.dag, task, self.sched.vault_of(th), &self.placement, &info, &self.cfg);
            if self.sched.mode() == SchedulerMode::Basic {
                steps.insert(0, Step::Compute { ns: self.cfg.monitor_ns });
            }
            let p = &mut self.pim[th];
            p.task = Some(a.task);
            p.steps.extend(steps);
            self.wake(Actor::Pim(th), t)?;
            if self.sched.queued() == 0 {
                break;
            }
        }
        Ok(())
    }

    fn pim_continue(&mut self, th: usize, t: f64) -> Result<(), Error> {
        let Some(g) = self.pim[th].task.take() else { return Ok(()) };
        self.sched.complete(g)?;
        self.pim_idle.insert(th);
        let j = self.task_stream[g];
        let q = self.anl[j].query.as_mut().expect("tasks belong to active queries");
        q.remaining -= 1;
        if q.remaining == 0 {
            self.wake(Actor::Anl(j), t)?;
        }
        self.pim_dispatch(t)
    }

    // ---- wrap-up ----

    /// Applies every remaining update and evaluates the final pass.
    fn final_answers(&mut self) -> Result<Vec<QueryResult>, Error> {
        let plans = self.w.final_pass();
        let mut out = Vec::with_capacity(plans.len());
        match self.sys.system {
            SystemKind::Polynesia | SystemKind::MiSw => {
                while self.engine.pending_update_count() > 0 {
                    let Some(r) = self.build_round()? else { break };
                    for rc in r.columns {
                        self.slots[&rc.column].publish(rc.applied.partitions);
                    }
                    self.published = r.watermark;
                }
                let src: BTreeMap<ColumnRef, Arc<ColumnData>> = self.slots.iter().map(|(c, s)| (*c, s.load())).collect();
                for p in &plans {
                    out.push(run_dag(&decompose(p, &self.placement, &self.cfg)?, &src)?);
                }
            }
            SystemKind::SiSs => {
                let src = project(self.w, &self.engine);
                for p in &plans {
                    out.push(run_dag(&decompose(p, &self.placement, &self.cfg)?, &src)?);
                }
            }
            SystemKind::SiMvcc => {
                let ts = self.engine.last_commit().0;
                for p in &plans {
                    let dag = decompose(p, &self.placement, &self.cfg)?;
                    out.push(self.mvcc_answer(p, &dag, ts)?);
                }
            }
        }
        Ok(out)
    }

    fn commit_log(&self) -> Vec<UpdateLogEntry> {
        let mut all: Vec<UpdateLogEntry> = self.engine.logs().iter().flat_map(|l| l.entries.iter().copied()).collect();
        all.sort_by_key(|e| e.commit);
        all
    }
}

fn per_second(n: u64, ns: f64) -> f64 {
    if ns > 0.0 {
        n as f64 * 1e9 / ns
    } else {
        0.0
    }
}

/// Runs `w` on the system described by `sys`.
pub fn run(sys: &SystemConfig, w: &Workload) -> Result<RunOutput, Error> {
    sys.validate()?;
    w.spec.validate()?;
    let mut sim = Sim::new(sys, w)?;
    sim.run()?;
    if sim.txn_done as usize != w.spec.txn_queries() || sim.anl_done as usize != w.spec.anl_queries() {
        return Err(Error::InvalidSystem(format!(
            "simulation stalled after {} transactional and {} analytical queries",
            sim.txn_done, sim.anl_done
        )));
    }
    let final_answers = sim.final_answers()?;
    let commit_log = sim.commit_log();
    let (placement, scheduler) = MetricsReport::labels(sys);
    let (snapshots, snapshot_bytes) = match sys.system {
        SystemKind::Polynesia | SystemKind::MiSw => (sim.snaps.snapshots_created(), sim.snaps.bytes_copied()),
        SystemKind::SiSs => (sim.full.snapshots_taken(), sim.full.bytes_copied()),
        SystemKind::SiMvcc => (0, 0),
    };
    let mean_latency = if sim.latencies.is_empty() { 0.0 } else { sim.latencies.iter().sum::<f64>() / sim.latencies.len() as f64 };
    let report = MetricsReport {
        system: sys.system.to_string(),
        placement,
        scheduler,
        ideal: sys.ideal,
        seed: w.spec.seed,
        txn_queries: sim.txn_done,
        anl_queries: sim.anl_done,
        txn_throughput: per_second(sim.txn_done, sim.txn_last),
        anl_throughput: per_second(sim.anl_done, sim.anl_last),
        txn_makespan_ns: sim.txn_last,
        anl_makespan_ns: sim.anl_last,
        makespan_ns: sim.events.now(),
        update_entries: commit_log.len() as u64,
        update_rounds: sim.latencies.len() as u64,
        update_application_latency_ns: mean_latency,
        onchip_bytes: sim.res.total_port_bytes(),
        offchip_bytes: sim.res.channel_bytes(),
        snapshots,
        snapshot_bytes,
        mean_chain_length: if sim.chain_reads == 0 { 0.0 } else { sim.chain_sum as f64 / sim.chain_reads as f64 },
        answer_digest: answer_digest(&final_answers),
    };
    Ok(RunOutput { report, queries: sim.records, final_answers, commit_log, round_latencies: sim.latencies })
}
