//! Task scheduling over the PIM threads.
//!
//! Threads are numbered `vault * threads_per_vault + lane`.
//!
//! * Basic: a ready task is pushed to the least-loaded worker thread of its
//!   home vault group and never moves. Lane 0 of each group's first vault
//!   is reserved as the group's runtime monitor, and every assignment costs
//!   `monitor_ns`.
//! * Optimized: ready tasks wait in a deque per home vault. An idle thread
//!   pulls from the front of its own vault's deque, then steals from the
//!   back of the other vaults of its group, then from the back of vaults in
//!   other groups. Victims are visited round-robin.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::vault::{EventQueue, Progress, Resources, Step, TopologyConfig, VaultId};

use super::task::{Task, TaskDag};
use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerMode {
    Basic,
    Optimized,
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerMode::Basic => "basic",
            SchedulerMode::Optimized => "optimized",
        })
    }
}

impl FromStr for SchedulerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(SchedulerMode::Basic),
            "optimized" => Ok(SchedulerMode::Optimized),
            _ => Err(format!("unknown scheduler `{s}`")),
        }
    }
}

/// Where an assigned task was taken from, relative to the thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Own,
    Group,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub task: usize,
    pub scope: Scope,
}

#[derive(Debug, Clone)]
struct Slot {
    home_vault: VaultId,
    pending: usize,
    dependents: Vec<usize>,
    done: bool,
}

/// Kahn's algorithm; fails if some task can never become ready.
pub fn topological_order(tasks: &[Task]) -> Result<Vec<usize>, AnalyticsError> {
    let n = tasks.len();
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in tasks {
        for &d in &t.deps {
            if d >= n {
                return Err(AnalyticsError::UnknownTask(d));
            }
            indeg[t.id] += 1;
            out[d].push(t.id);
        }
    }
    let mut ready: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_front() {
        order.push(i);
        for &j in &out[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push_back(j);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(AnalyticsError::CyclicDependency)
    }
}

/// Shared ready-queue state for any number of submitted DAGs.
#[derive(Debug, Clone)]
pub struct Scheduler {
    mode: SchedulerMode,
    n_vaults: usize,
    group_size: usize,
    threads_per_vault: usize,
    slots: Vec<Slot>,
    vault_queues: Vec<VecDeque<usize>>,
    thread_queues: Vec<VecDeque<usize>>,
    steal_cursor: Vec<usize>,
}

impl Scheduler {
    pub fn new(mode: SchedulerMode, cfg: &TopologyConfig) -> Self {
        let n_threads = cfg.n_pim_threads();
        Scheduler {
            mode,
            n_vaults: cfg.n_vaults,
            group_size: cfg.group_size,
            threads_per_vault: cfg.pim_threads_per_vault,
            slots: Vec::new(),
            vault_queues: vec![VecDeque::new(); cfg.n_vaults],
            thread_queues: vec![VecDeque::new(); n_threads],
            steal_cursor: vec![0; n_threads],
        }
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }

    pub fn n_threads(&self) -> usize {
        self.n_vaults * self.threads_per_vault
    }

    pub fn vault_of(&self, thread: usize) -> VaultId {
        thread / self.threads_per_vault
    }

    /// Whether `thread` is reserved for the runtime monitor.
    pub fn is_monitor(&self, thread: usize) -> bool {
        self.mode == SchedulerMode::Basic && thread.is_multiple_of(self.threads_per_vault) && self.vault_of(thread).is_multiple_of(self.group_size)
    }

    pub fn workers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_threads()).filter(|&t| !self.is_monitor(t))
    }

    /// Adds a DAG; returns the global id of its task 0. Task `i` of the DAG
    /// becomes global task `base + i`.
    pub fn submit(&mut self, dag: &TaskDag) -> Result<usize, AnalyticsError> {
        topological_order(&dag.tasks)?;
        let base = self.slots.len();
        for t in &dag.tasks {
            if t.home_vault >= self.n_vaults {
                return Err(AnalyticsError::UnknownVault(t.home_vault));
            }
        }
        for t in &dag.tasks {
            self.slots.push(Slot { home_vault: t.home_vault, pending: t.deps.len(), dependents: Vec::new(), done: false });
        }
        for t in &dag.tasks {
            for &d in &t.deps {
                self.slots[base + d].dependents.push(base + t.id);
            }
        }
        for t in &dag.tasks {
            if t.deps.is_empty() {
                self.enqueue(base + t.id);
            }
        }
        Ok(base)
    }

    fn enqueue(&mut self, g: usize) {
        let home = self.slots[g].home_vault;
        match self.mode {
            SchedulerMode::Optimized => self.vault_queues[home].push_back(g),
            SchedulerMode::Basic => {
                let group = home / self.group_size;
                let first = group * self.group_size * self.threads_per_vault;
                let last = first + self.group_size * self.threads_per_vault;
                let target = (first..last)
                    .filter(|&t| !self.is_monitor(t))
                    .min_by_key(|&t| (self.thread_queues[t].len(), t))
                    .expect("every group has a worker thread");
                self.thread_queues[target].push_back(g);
            }
        }
    }

    /// Next task for an idle thread, if any is available to it.
    pub fn next_task(&mut self, thread: usize) -> Option<Assignment> {
        if self.is_monitor(thread) {
            return None;
        }
        match self.mode {
            SchedulerMode::Basic => self.thread_queues[thread].pop_front().map(|task| Assignment { task, scope: Scope::Own }),
            SchedulerMode::Optimized => {
                let v = self.vault_of(thread);
                if let Some(task) = self.vault_queues[v].pop_front() {
                    return Some(Assignment { task, scope: Scope::Own });
                }
                let g = v / self.group_size;
                let group: Vec<VaultId> = (g * self.group_size..(g + 1) * self.group_size).filter(|&x| x != v).collect();
                let remote: Vec<VaultId> = (0..self.n_vaults).filter(|&x| x / self.group_size != g).collect();
                for (victims, scope) in [(group, Scope::Group), (remote, Scope::Remote)] {
                    if victims.is_empty() {
                        continue;
                    }
                    let start = self.steal_cursor[thread] % victims.len();
                    for k in 0..victims.len() {
                        let victim = victims[(start + k) % victims.len()];
                        if let Some(task) = self.vault_queues[victim].pop_back() {
                            self.steal_cursor[thread] = start + k + 1;
                            return Some(Assignment { task, scope });
                        }
                    }
                }
                None
            }
        }
    }

    /// Marks a task finished and releases dependents whose dependencies are
    /// now all complete. Returns how many became ready.
    pub fn complete(&mut self, g: usize) -> Result<usize, AnalyticsError> {
        let slot = self.slots.get_mut(g).ok_or(AnalyticsError::UnknownTask(g))?;
        if slot.done {
            return Err(AnalyticsError::TaskAlreadyCompleted(g));
        }
        slot.done = true;
        let deps = std::mem::take(&mut slot.dependents);
        let mut released = 0;
        for d in deps {
            self.slots[d].pending -= 1;
            if self.slots[d].pending == 0 {
                self.enqueue(d);
                released += 1;
            }
        }
        Ok(released)
    }

    pub fn home_vault(&self, g: usize) -> VaultId {
        self.slots[g].home_vault
    }

    pub fn queued(&self) -> usize {
        self.vault_queues.iter().chain(&self.thread_queues).map(VecDeque::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub task: usize,
    pub thread: usize,
    pub start: f64,
    pub end: f64,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// In completion order.
    pub entries: Vec<TraceEntry>,
    pub makespan: f64,
}

struct Running {
    task: usize,
    scope: Scope,
    start: f64,
    steps: VecDeque<Step>,
}

/// Runs one DAG to completion on an otherwise idle machine. `cost` gives
/// the steps a thread in the given vault performs for a task.
pub fn schedule(dag: &TaskDag, mode: SchedulerMode, cfg: &TopologyConfig, cost: &dyn Fn(&Task, VaultId) -> Vec<Step>) -> Result<Trace, AnalyticsError> {
    let mut sched = Scheduler::new(mode, cfg);
    sched.submit(dag)?;
    let mut res = Resources::new(cfg.clone());
    let mut events: EventQueue<usize> = EventQueue::new();
    let mut running: Vec<Option<Running>> = (0..sched.n_threads()).map(|_| None).collect();
    let mut idle: Vec<usize> = Vec::new();
    let mut entries = Vec::with_capacity(dag.len());

    let start_task = |sched: &mut Scheduler, running: &mut Vec<Option<Running>>, thread: usize, t: f64| -> bool {
        let Some(a) = sched.next_task(thread) else { return false };
        let mut steps: VecDeque<Step> = cost(&dag.tasks[a.task], sched.vault_of(thread)).into();
        if mode == SchedulerMode::Basic {
            steps.push_front(Step::Compute { ns: cfg.monitor_ns });
        }
        running[thread] = Some(Running { task: a.task, scope: a.scope, start: t, steps });
        true
    };

    let workers: Vec<usize> = sched.workers().collect();
    for &w in &workers {
        if start_task(&mut sched, &mut running, w, 0.0) {
            events.push(0.0, w as u32, w).map_err(AnalyticsError::Vault)?;
        } else {
            idle.push(w);
        }
    }
    while let Some(ev) = events.advance() {
        let (t, th) = (ev.time, ev.payload);
        let run = running[th].as_mut().expect("events only fire for busy threads");
        if let Some(step) = run.steps.front_mut() {
            let p = res.perform(t, step).map_err(AnalyticsError::Vault)?;
            if let Progress::Done(_) = p {
                run.steps.pop_front();
            }
            events.push(p.time(), th as u32, th).map_err(AnalyticsError::Vault)?;
            continue;
        }
        let done = running[th].take().expect("checked above");
        entries.push(TraceEntry { task: done.task, thread: th, start: done.start, end: t, scope: done.scope });
        sched.complete(done.task)?;
        if start_task(&mut sched, &mut running, th, t) {
            events.push(t, th as u32, th).map_err(AnalyticsError::Vault)?;
        } else {
            idle.push(th);
        }
        let waiting = std::mem::take(&mut idle);
        for w in waiting {
            if running[w].is_none() && start_task(&mut sched, &mut running, w, t) {
                events.push(t, w as u32, w).map_err(AnalyticsError::Vault)?;
            } else {
                idle.push(w);
            }
        }
        idle.sort_unstable();
    }
    if entries.len() != dag.len() {
        return Err(AnalyticsError::CyclicDependency);
    }
    let makespan = entries.iter().map(|e| e.end).fold(0.0, f64::max);
    Ok(Trace { entries, makespan })
}
