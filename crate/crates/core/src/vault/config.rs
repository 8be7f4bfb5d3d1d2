//! Topology and cost constants, loadable from `key=value` text.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Malformed { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// All rates are bytes/ns (numerically equal to GB/s); all times are ns.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub n_vaults: usize,
    pub group_size: usize,
    pub per_vault_bw: f64,
    pub offchip_bw: f64,
    pub local_latency: f64,
    pub remote_hop_latency: f64,
    pub host_latency: f64,
    pub pim_threads_per_vault: usize,
    pub pim_ns_per_tuple: f64,
    pub host_ns_per_tuple: f64,
    /// Copy-unit transfer granularity.
    pub copy_chunk_bytes: u64,
    /// Copy-unit tracking buffer entries (chunks in flight).
    pub copy_tracking_entries: usize,
    pub hash_probe_units: usize,
    /// Merge-unit time per comparator-tree level per entry.
    pub merge_ns_per_level: f64,
    /// Update-application unit time per recode-map lookup.
    pub recode_ns: f64,
    pub random_access_bytes: u64,
    pub line_bytes: u64,
    pub dict_replication_threshold: usize,
    pub segment_rows: usize,
    pub compaction_factor: usize,
    /// Basic scheduler bookkeeping per task assignment.
    pub monitor_ns: f64,
    /// Largest transfer reserved on a port in one step.
    pub bulk_chunk_bytes: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            n_vaults: 16,
            group_size: 4,
            per_vault_bw: 16.0,
            offchip_bw: 32.0,
            local_latency: 50.0,
            remote_hop_latency: 25.0,
            host_latency: 100.0,
            pim_threads_per_vault: 4,
            pim_ns_per_tuple: 1.0,
            host_ns_per_tuple: 0.5,
            copy_chunk_bytes: 256,
            copy_tracking_entries: 16,
            hash_probe_units: 4,
            merge_ns_per_level: 1.0,
            recode_ns: 0.25,
            random_access_bytes: 32,
            line_bytes: 64,
            dict_replication_threshold: 32,
            segment_rows: 1000,
            compaction_factor: 4,
            monitor_ns: 20.0,
            bulk_chunk_bytes: 4096,
        }
    }
}

macro_rules! fields {
    ($m:ident) => {
        $m!(
            n_vaults: usize,
            group_size: usize,
            per_vault_bw: f64,
            offchip_bw: f64,
            local_latency: f64,
            remote_hop_latency: f64,
            host_latency: f64,
            pim_threads_per_vault: usize,
            pim_ns_per_tuple: f64,
            host_ns_per_tuple: f64,
            copy_chunk_bytes: u64,
            copy_tracking_entries: usize,
            hash_probe_units: usize,
            merge_ns_per_level: f64,
            recode_ns: f64,
            random_access_bytes: u64,
            line_bytes: u64,
            dict_replication_threshold: usize,
            segment_rows: usize,
            compaction_factor: usize,
            monitor_ns: f64,
            bulk_chunk_bytes: u64
        )
    };
}

impl TopologyConfig {
    /// Named parameter sets: `default` (16 GB/s per vault) and `narrow`
    /// (8 GB/s per vault).
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "default" => Ok(Self::default()),
            "narrow" => Ok(TopologyConfig { per_vault_bw: 8.0, ..Self::default() }),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.n_vaults / self.group_size
    }

    pub fn n_pim_threads(&self) -> usize {
        self.n_vaults * self.pim_threads_per_vault
    }

    /// Same configuration with every latency constant multiplied by `f`.
    pub fn with_latency_scale(&self, f: f64) -> Self {
        TopologyConfig {
            local_latency: self.local_latency * f,
            remote_hop_latency: self.remote_hop_latency * f,
            host_latency: self.host_latency * f,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n_vaults == 0 || self.group_size == 0 {
            return bad("n_vaults and group_size must be positive");
        }
        if !self.n_vaults.is_multiple_of(self.group_size) {
            return bad("n_vaults must be divisible by group_size");
        }
        if self.per_vault_bw <= 0.0 || self.offchip_bw <= 0.0 {
            return bad("bandwidths must be positive");
        }
        let times = [self.local_latency, self.remote_hop_latency, self.host_latency, self.pim_ns_per_tuple, self.host_ns_per_tuple, self.merge_ns_per_level, self.recode_ns, self.monitor_ns];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("latencies and per-item costs must be finite and non-negative");
        }
        if self.pim_threads_per_vault == 0 || self.copy_tracking_entries == 0 || self.hash_probe_units == 0 {
            return bad("thread, tracking-entry and probe-unit counts must be positive");
        }
        if self.copy_chunk_bytes == 0 || self.bulk_chunk_bytes == 0 || self.segment_rows == 0 || self.random_access_bytes == 0 || self.line_bytes == 0 {
            return bad("chunk sizes and segment length must be positive");
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(mut self, text: &str) -> Result<Self, ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or(ConfigError::Malformed { line })?;
            self.set(line, k.trim(), v.trim())?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::default().apply_text(text)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        macro_rules! setter {
            ($($name:ident: $ty:ty),*) => {
                match key {
                    $(stringify!($name) => {
                        self.$name = value.parse::<$ty>().map_err(|_| ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                        })?;
                    })*
                    _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
                }
            };
        }
        fields!(setter);
        Ok(())
    }

    /// Every parameter as `key=value`, one per line, in a fixed order.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        macro_rules! dump {
            ($($name:ident: $ty:ty),*) => {
                $(writeln!(out, "{}={}", stringify!($name), self.$name).expect("writing to a String");)*
            };
        }
        fields!(dump);
        out
    }
}
