//! Experiment description and its `key = value` file format.
//!
//! One setting per line; `#` starts a comment; lists are comma separated.
//!
//! ```text
//! mode = optimized
//! backend = slow_remote
//! workers = 16, 32
//! block_sizes = 50, 100
//! reps = 20
//! out = results/slow_opt.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use valphase::{BackendKind, CachePolicy, DiskConfig, LatencyModel, Mode, WorkloadConfig};

use crate::error::BenchError;

/// Whether vscc uses the chaincode cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheSetting {
    /// Off for baseline, on for optimized.
    Auto,
    On,
    Off,
}

impl CacheSetting {
    pub fn enabled(self, mode: Mode) -> bool {
        match self {
            CacheSetting::Auto => mode == Mode::Optimized,
            CacheSetting::On => true,
            CacheSetting::Off => false,
        }
    }
}

impl FromStr for CacheSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(CacheSetting::Auto),
            "on" | "true" | "yes" | "1" => Ok(CacheSetting::On),
            "off" | "false" | "no" | "0" => Ok(CacheSetting::Off),
            other => Err(format!("expected auto, on or off, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub backend: BackendKind,
    pub workers: Vec<usize>,
    pub block_sizes: Vec<usize>,
    pub reps: usize,
    /// `block_size` is overridden per cell.
    pub workload: WorkloadConfig,
    pub cc_cache: CacheSetting,
    pub cache_policy: CachePolicy,
    pub verification_cost_us: u64,
    pub latency: LatencyModel,
    pub service_threads: usize,
    pub ledger_retry_limit: u32,
    /// Modelled device sync latency of the local stores.
    pub disk_sync_us: u64,
    pub fsync: bool,
    /// Per-block CSV; the summary goes next to it.
    pub out: PathBuf,
    /// Parent of the per-repetition store directories; system temp if unset.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            mode: Mode::Baseline,
            backend: BackendKind::FastEmbedded,
            workers: vec![16],
            block_sizes: vec![50],
            reps: 20,
            workload: WorkloadConfig::default(),
            cc_cache: CacheSetting::Auto,
            cache_policy: CachePolicy::OnUpgrade,
            verification_cost_us: 0,
            latency: LatencyModel::default(),
            service_threads: 32,
            ledger_retry_limit: 3,
            disk_sync_us: 1000,
            fsync: false,
            out: PathBuf::from("results.csv"),
            data_dir: None,
        }
    }
}

impl ExperimentSpec {
    pub fn disk(&self) -> DiskConfig {
        DiskConfig {
            fsync: self.fsync,
            sync_delay: Duration::from_micros(self.disk_sync_us),
        }
    }

    pub fn cache_enabled(&self) -> bool {
        self.cc_cache.enabled(self.mode)
    }

    /// Summary path for a CSV path: `dir/name.csv` becomes `dir/name.summary.csv`.
    pub fn summary_path(&self) -> PathBuf {
        summary_path_for(&self.out)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.workers.is_empty() || self.workers.contains(&0) {
            return Err("workers must be a non-empty list of positive counts".into());
        }
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err("block_sizes must be a non-empty list of positive sizes".into());
        }
        if self.reps == 0 {
            return Err("reps must be at least 1".into());
        }
        if self.ledger_retry_limit == 0 {
            return Err("ledger_retry_limit must be at least 1".into());
        }
        if self.service_threads == 0 {
            return Err("service_threads must be at least 1".into());
        }
        let mut w = self.workload.clone();
        w.block_size = self.block_sizes[0];
        w.check().map_err(|e| e.to_string())
    }

    /// Points `out` into `dir`, keeping the file name.
    pub fn redirect_output(&mut self, dir: &Path) {
        let name = self.out.file_name().map(PathBuf::from).unwrap_or_else(|| "results.csv".into());
        self.out = dir.join(name);
    }
}

pub fn summary_path_for(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    csv.with_file_name(format!("{stem}.summary.csv"))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_one<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn set(spec: &mut ExperimentSpec, key: &str, v: &str) -> Result<(), String> {
    let w = &mut spec.workload;
    let l = &mut spec.latency;
    match key {
        "mode" => spec.mode = parse_one(v)?,
        "backend" => spec.backend = parse_one(v)?,
        "workers" => spec.workers = parse_list(v)?,
        "block_sizes" | "block_size" => spec.block_sizes = parse_list(v)?,
        "reps" => spec.reps = parse_one(v)?,
        "total_txs" => w.total_txs = parse_one(v)?,
        "num_accounts" => w.num_accounts = parse_one(v)?,
        "seed" => w.seed = parse_one(v)?,
        "conflict_prob" => w.conflict_prob = parse_one(v)?,
        "policy_failure_prob" => w.policy_failure_prob = parse_one(v)?,
        "unknown_chaincode_prob" => w.unknown_chaincode_prob = parse_one(v)?,
        "upgrade_prob" => w.upgrade_prob = parse_one(v)?,
        "num_chaincodes" => w.num_chaincodes = parse_one(v)?,
        "orgs" => w.orgs = parse_list(v)?,
        "initial_balance" => w.initial_balance = parse_one(v)?,
        "op_weights" => {
            let ws: Vec<u32> = parse_list(v)?;
            w.op_weights = ws
                .try_into()
                .map_err(|_| format!("op_weights needs {} values", valphase::workload::OP_KINDS))?;
        }
        "cc_cache" => spec.cc_cache = parse_one(v)?,
        "cache_policy" => spec.cache_policy = parse_one(v)?,
        "verification_cost_us" => spec.verification_cost_us = parse_one(v)?,
        "read_base_us" => l.read_base_us = parse_one(v)?,
        "read_per_key_us" => l.read_per_key_us = parse_one(v)?,
        "write_base_us" => l.write_base_us = parse_one(v)?,
        "write_per_key_us" => l.write_per_key_us = parse_one(v)?,
        "bulk_base_us" => l.bulk_base_us = parse_one(v)?,
        "bulk_per_key_us" => l.bulk_per_key_us = parse_one(v)?,
        "service_threads" => spec.service_threads = parse_one(v)?,
        "ledger_retry_limit" => spec.ledger_retry_limit = parse_one(v)?,
        "disk_sync_us" => spec.disk_sync_us = parse_one(v)?,
        "fsync" => spec.fsync = parse_bool(v)?,
        "out" => spec.out = PathBuf::from(v),
        "data_dir" => spec.data_dir = Some(PathBuf::from(v)),
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

/// Parses a config file body. Unset keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, BenchError> {
    let mut spec = ExperimentSpec::default();
    let mut seen = std::collections::HashSet::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| BenchError::Config { line, msg };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        if value.is_empty() {
            return Err(err(format!("{key} has no value")));
        }
        if !seen.insert(key.clone()) {
            return Err(err(format!("{key} is set twice")));
        }
        set(&mut spec, &key, value).map_err(|m| err(format!("{key}: {m}")))?;
    }
    spec.check().map_err(|msg| BenchError::Config {
        line: last_line,
        msg,
    })?;
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config {
        line: 0,
        msg: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}
