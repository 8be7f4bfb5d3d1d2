//! Bandwidth reservations on vault ports and the off-chip channel.
//!
//! Every port is a first-come first-served resource with a busy-until
//! timestamp. A transfer of `b` bytes occupies its port for `b / bw` ns
//! starting no earlier than the port frees up, so reservations on one
//! resource never overlap. Latency is added after the transfer and does not
//! occupy the port.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{TopologyConfig, VaultError};

pub type VaultId = usize;

/// Who issues an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Vault(VaultId),
    Host,
}

/// Timing of one charged transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge {
    /// When the port finished moving the bytes.
    pub transfer_end: f64,
    /// When the requester sees the data.
    pub done: f64,
}

#[derive(Debug, Clone)]
pub struct Resources {
    cfg: TopologyConfig,
    port_busy: Vec<f64>,
    chan_busy: f64,
    port_bytes: Vec<u64>,
    chan_bytes: u64,
}

impl Resources {
    pub fn new(cfg: TopologyConfig) -> Self {
        let n = cfg.n_vaults;
        Resources { cfg, port_busy: vec![0.0; n], chan_busy: 0.0, port_bytes: vec![0; n], chan_bytes: 0 }
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.cfg
    }

    pub fn group_of(&self, v: VaultId) -> usize {
        v / self.cfg.group_size
    }

    /// 0 within a vault, 1 within a vault group, 2 across groups.
    pub fn hops(&self, a: VaultId, b: VaultId) -> u32 {
        if a == b {
            0
        } else if self.group_of(a) == self.group_of(b) {
            1
        } else {
            2
        }
    }

    fn check(&self, v: VaultId) -> Result<(), VaultError> {
        if v < self.cfg.n_vaults {
            Ok(())
        } else {
            Err(VaultError::UnknownVault(v))
        }
    }

    fn check_origin(&self, o: Origin) -> Result<(), VaultError> {
        match o {
            Origin::Vault(v) => self.check(v),
            Origin::Host => Ok(()),
        }
    }

    /// Latency from `origin` to data in `vault`, excluding transfer time.
    pub fn latency(&self, vault: VaultId, origin: Origin) -> f64 {
        match origin {
            Origin::Host => self.cfg.host_latency,
            Origin::Vault(o) => self.cfg.local_latency + self.hops(o, vault) as f64 * self.cfg.remote_hop_latency,
        }
    }

    fn reserve_port(&mut self, at: f64, v: VaultId, bytes: u64) -> f64 {
        let start = at.max(self.port_busy[v]);
        self.port_busy[v] = start + bytes as f64 / self.cfg.per_vault_bw;
        self.port_bytes[v] += bytes;
        self.port_busy[v]
    }

    fn reserve_channel(&mut self, at: f64, bytes: u64) -> f64 {
        let start = at.max(self.chan_busy);
        self.chan_busy = start + bytes as f64 / self.cfg.offchip_bw;
        self.chan_bytes += bytes;
        self.chan_busy
    }

    /// Moves `bytes` between `vault` and `origin`. Host accesses also cross
    /// the off-chip channel; the transfer starts once both resources are
    /// free.
    pub fn charge_access(&mut self, at: f64, vault: VaultId, bytes: u64, origin: Origin) -> Result<Charge, VaultError> {
        self.check(vault)?;
        self.check_origin(origin)?;
        let transfer_end = match origin {
            Origin::Vault(_) => self.reserve_port(at, vault, bytes),
            Origin::Host => {
                let start = at.max(self.port_busy[vault]).max(self.chan_busy);
                self.reserve_port(start, vault, bytes).max(self.reserve_channel(start, bytes))
            }
        };
        Ok(Charge { transfer_end, done: transfer_end + self.latency(vault, origin) })
    }

    /// A host transfer that only occupies the off-chip channel.
    pub fn charge_host(&mut self, at: f64, bytes: u64) -> Charge {
        let transfer_end = self.reserve_channel(at, bytes);
        Charge { transfer_end, done: transfer_end + self.cfg.host_latency }
    }

    /// `count` dependent random accesses issued back to back by one
    /// in-order requester. The port is held only while bytes move; the
    /// requester additionally waits one round trip per access.
    pub fn charge_random(&mut self, at: f64, vault: VaultId, origin: Origin, count: u64) -> Result<f64, VaultError> {
        if count == 0 {
            return Ok(at);
        }
        let c = self.charge_access(at, vault, count * self.cfg.random_access_bytes, origin)?;
        Ok(c.transfer_end + count as f64 * self.latency(vault, origin))
    }

    /// Dependent host accesses of one cache line each, over the channel.
    pub fn charge_host_random(&mut self, at: f64, count: u64) -> f64 {
        if count == 0 {
            return at;
        }
        let c = self.charge_host(at, count * self.cfg.line_bytes);
        c.transfer_end + count as f64 * self.cfg.host_latency
    }

    /// Copy-unit transfer of `bytes` from `src` to `dst`: chunks are read
    /// from `src`, travel to `dst` and are written there, with at most
    /// `copy_tracking_entries` chunks in flight.
    pub fn charge_copy(&mut self, at: f64, src: VaultId, dst: VaultId, bytes: u64) -> Result<f64, VaultError> {
        self.check(src)?;
        self.check(dst)?;
        if bytes == 0 {
            return Ok(at);
        }
        let chunk = self.cfg.copy_chunk_bytes;
        let n_chunks = bytes.div_ceil(chunk);
        let size = |i: u64| if i + 1 == n_chunks { bytes - chunk * i } else { chunk };
        let wire = self.latency(src, Origin::Vault(dst));

        // (time, seq, chunk, is_write); reads sort before writes at equal time
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut issued = 0u64;
        let mut push = |heap: &mut BinaryHeap<_>, t: f64, c: u64, w: bool| {
            heap.push(Reverse((OrdF64(t), w, seq, c)));
            seq += 1;
        };
        while issued < n_chunks && issued < self.cfg.copy_tracking_entries as u64 {
            push(&mut heap, at, issued, false);
            issued += 1;
        }
        let mut done = at;
        while let Some(Reverse((OrdF64(t), is_write, _, c))) = heap.pop() {
            if is_write {
                let end = self.reserve_port(t, dst, size(c));
                done = done.max(end);
                if issued < n_chunks {
                    push(&mut heap, end, issued, false);
                    issued += 1;
                }
            } else {
                let end = self.reserve_port(t, src, size(c));
                push(&mut heap, end + wire, c, true);
            }
        }
        Ok(done)
    }

    pub fn port_bytes(&self, v: VaultId) -> u64 {
        self.port_bytes[v]
    }

    pub fn port_busy_until(&self, v: VaultId) -> f64 {
        self.port_busy[v]
    }

    pub fn total_port_bytes(&self) -> u64 {
        self.port_bytes.iter().sum()
    }

    pub fn channel_bytes(&self) -> u64 {
        self.chan_bytes
    }

    /// Runs one slice of `step` starting at `at` and returns when the
    /// requester may continue. Bulk steps are sliced so that concurrent
    /// requesters interleave on shared ports.
    pub fn perform(&mut self, at: f64, step: &mut Step) -> Result<Progress, VaultError> {
        const RANDOM_BATCH: u64 = 16;
        let chunk = self.cfg.bulk_chunk_bytes;
        Ok(match step {
            Step::Compute { ns } => Progress::Done(at + *ns),
            Step::Access { vault, bytes, origin } => {
                let b = (*bytes).min(chunk);
                *bytes -= b;
                let c = self.charge_access(at, *vault, b, *origin)?;
                if *bytes == 0 { Progress::Done(c.done) } else { Progress::Partial(c.transfer_end) }
            }
            Step::Host { bytes } => {
                let b = (*bytes).min(chunk);
                *bytes -= b;
                let c = self.charge_host(at, b);
                if *bytes == 0 { Progress::Done(c.done) } else { Progress::Partial(c.transfer_end) }
            }
            Step::Random { vault, origin, count } => {
                let n = (*count).min(RANDOM_BATCH);
                *count -= n;
                let t = self.charge_random(at, *vault, *origin, n)?;
                if *count == 0 { Progress::Done(t) } else { Progress::Partial(t) }
            }
            Step::HostRandom { count } => {
                let n = (*count).min(RANDOM_BATCH);
                *count -= n;
                let t = self.charge_host_random(at, n);
                if *count == 0 { Progress::Done(t) } else { Progress::Partial(t) }
            }
            Step::Copy { src, dst, bytes } => {
                let b = (*bytes).min(chunk);
                *bytes -= b;
                let t = self.charge_copy(at, *src, *dst, b)?;
                if *bytes == 0 { Progress::Done(t) } else { Progress::Partial(t) }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// One unit of simulated work issued by an actor.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Pure delay on the actor's own core.
    Compute { ns: f64 },
    /// Streamed transfer; latency is paid once at the end.
    Access { vault: VaultId, bytes: u64, origin: Origin },
    /// Dependent accesses of `random_access_bytes` each.
    Random { vault: VaultId, origin: Origin, count: u64 },
    /// Streamed transfer over the off-chip channel only.
    Host { bytes: u64 },
    /// Dependent cache-line accesses over the off-chip channel.
    HostRandom { count: u64 },
    Copy { src: VaultId, dst: VaultId, bytes: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Progress {
    /// The step has more work; call `perform` again at this time.
    Partial(f64),
    Done(f64),
}

impl Progress {
    pub fn time(&self) -> f64 {
        match *self {
            Progress::Partial(t) | Progress::Done(t) => t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_latency() -> Resources {
        Resources::new(TopologyConfig::default().with_latency_scale(0.0))
    }

    #[test]
    fn access_examples() {
        let mut r = zero_latency();
        assert_eq!(r.charge_access(0.0, 0, 64, Origin::Vault(0)).unwrap().done, 4.0);
        let mut r = Resources::new(TopologyConfig::default());
        assert_eq!(r.charge_access(0.0, 3, 0, Origin::Vault(3)).unwrap().done, 50.0);
        let mut r = Resources::new(TopologyConfig::default());
        let local = r.charge_access(0.0, 1, 64, Origin::Vault(1)).unwrap().done;
        let mut r = Resources::new(TopologyConfig::default());
        let remote = r.charge_access(0.0, 1, 64, Origin::Vault(0)).unwrap().done;
        assert_eq!(remote - local, 25.0);
        assert_eq!(r.charge_access(0.0, 16, 1, Origin::Host), Err(VaultError::UnknownVault(16)));
    }

    #[test]
    fn hops() {
        let r = zero_latency();
        assert_eq!((r.hops(5, 5), r.hops(4, 7), r.hops(3, 4)), (0, 1, 2));
    }

    #[test]
    fn port_serializes_transfers() {
        let mut r = zero_latency();
        r.charge_access(0.0, 2, 160, Origin::Vault(2)).unwrap();
        let c = r.charge_access(0.0, 2, 160, Origin::Vault(5)).unwrap();
        assert_eq!(c.transfer_end, 20.0);
    }

    #[test]
    fn copy_within_one_vault_is_two_passes_over_the_port() {
        let mut r = zero_latency();
        assert_eq!(r.charge_copy(0.0, 3, 3, 4096).unwrap(), 2.0 * 4096.0 / 16.0);
        assert_eq!(r.charge_copy(7.0, 3, 3, 0).unwrap(), 7.0);
    }

    #[test]
    fn cross_group_copy_pays_hops() {
        let cfg = TopologyConfig::default();
        let mut a = Resources::new(cfg.clone());
        let same = a.charge_copy(0.0, 0, 1, 8192).unwrap();
        let mut b = Resources::new(cfg);
        let far = b.charge_copy(0.0, 0, 8, 8192).unwrap();
        assert!(far > same);
        // reads and writes land on different ports, so they overlap
        assert!(far < 2.0 * 8192.0 / 16.0 + 2000.0);
    }

    #[test]
    fn host_access_uses_channel() {
        let mut r = zero_latency();
        let c = r.charge_access(0.0, 0, 64, Origin::Host).unwrap();
        assert_eq!(c.transfer_end, 4.0);
        assert_eq!(r.channel_bytes(), 64);
        assert_eq!(r.charge_host(0.0, 64).transfer_end, 4.0);
    }

    #[test]
    fn perform_slices_bulk_steps() {
        let mut r = Resources::new(TopologyConfig::default());
        let mut s = Step::Access { vault: 0, bytes: 10_000, origin: Origin::Vault(0) };
        let mut t = 0.0;
        let mut slices = 0;
        loop {
            slices += 1;
            match r.perform(t, &mut s).unwrap() {
                Progress::Partial(n) => t = n,
                Progress::Done(n) => {
                    t = n;
                    break;
                }
            }
        }
        assert_eq!(slices, 3);
        assert_eq!(t, 10_000.0 / 16.0 + 50.0);
    }

    proptest! {
        #[test]
        fn conservation_and_bandwidth_ceiling(reqs in prop::collection::vec((0usize..16, 0u64..5000, 0usize..17, 0.0f64..1000.0), 1..100)) {
            let mut r = Resources::new(TopologyConfig::default());
            let mut routed = [0u64; 16];
            let mut reqs = reqs;
            reqs.sort_by(|a, b| a.3.total_cmp(&b.3));
            let mut first = [f64::INFINITY; 16];
            for (v, bytes, o, at) in reqs {
                let origin = if o == 16 { Origin::Host } else { Origin::Vault(o) };
                r.charge_access(at, v, bytes, origin).unwrap();
                routed[v] += bytes;
                first[v] = first[v].min(at);
            }
            for v in 0..16 {
                prop_assert_eq!(r.port_bytes(v), routed[v]);
                if routed[v] > 0 {
                    let span = r.port_busy_until(v) - first[v];
                    prop_assert!(routed[v] as f64 <= 16.0 * span + 1e-6);
                }
            }
        }
    }
}
