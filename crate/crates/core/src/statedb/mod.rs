//! Versioned state database.
//!
//! Two backends sit behind [`StateDb`]: [`EmbeddedStateDb`], an in-process
//! ordered store whose batches are logged to disk, and [`RemoteStateDb`],
//! the same store reached through a pool of service threads that charge a
//! [`LatencyModel`] on every request.

mod embedded;
mod remote;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

pub use embedded::EmbeddedStateDb;
pub use remote::RemoteStateDb;

use crate::error::Result;
use crate::fault::FailPoint;
use crate::types::{Key, Version, WriteSet};

/// Reserved key holding the last applied block height.
pub const SAVEPOINT_KEY: &[u8] = b"\x00savepoint";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionedValue {
    pub value: Vec<u8>,
    pub version: Version,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendKind {
    /// Local, fast store; reads are folded into the mvcc step.
    FastEmbedded,
    /// Client-server store; supports bulk reads, every call pays latency.
    SlowRemote,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::FastEmbedded => "fast_embedded",
            BackendKind::SlowRemote => "slow_remote",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fast_embedded" | "fast" | "embedded" | "leveldb" => Ok(BackendKind::FastEmbedded),
            "slow_remote" | "slow" | "remote" | "couchdb" => Ok(BackendKind::SlowRemote),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

/// Per-request costs of the remote backend, in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencyModel {
    pub read_base_us: u64,
    pub read_per_key_us: u64,
    pub write_base_us: u64,
    pub write_per_key_us: u64,
    pub bulk_base_us: u64,
    pub bulk_per_key_us: u64,
}

impl LatencyModel {
    pub const fn zero() -> Self {
        LatencyModel {
            read_base_us: 0,
            read_per_key_us: 0,
            write_base_us: 0,
            write_per_key_us: 0,
            bulk_base_us: 0,
            bulk_per_key_us: 0,
        }
    }

    pub fn read_cost_us(&self) -> u64 {
        self.read_base_us + self.read_per_key_us
    }

    pub fn bulk_cost_us(&self, keys: usize) -> u64 {
        self.bulk_base_us + keys as u64 * self.bulk_per_key_us
    }

    pub fn write_cost_us(&self, keys: usize) -> u64 {
        self.write_base_us + keys as u64 * self.write_per_key_us
    }

    /// Whether a bulk read of any size is no dearer per key than single reads.
    pub fn bulk_amortizes(&self) -> bool {
        self.bulk_base_us >= self.read_base_us && self.bulk_per_key_us <= self.read_per_key_us
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            read_base_us: 300,
            read_per_key_us: 20,
            write_base_us: 500,
            write_per_key_us: 30,
            bulk_base_us: 400,
            bulk_per_key_us: 5,
        }
    }
}

/// Operation counters, for tests and for the cache-effect measurements.
#[derive(Debug, Default)]
pub struct OpStats {
    gets: AtomicU64,
    system_gets: AtomicU64,
    bulk_gets: AtomicU64,
    bulk_keys: AtomicU64,
    batches: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub gets: u64,
    /// Gets against the system namespace (chaincode definitions).
    pub system_gets: u64,
    pub bulk_gets: u64,
    pub bulk_keys: u64,
    pub batches: u64,
}

impl OpStats {
    pub(crate) fn record_get(&self, key: &Key) {
        self.gets.fetch_add(1, Ordering::Relaxed);
        if key.is_system() {
            self.system_gets.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub(crate) fn record_bulk(&self, keys: usize) {
        self.bulk_gets.fetch_add(1, Ordering::Relaxed);
        self.bulk_keys.fetch_add(keys as u64, Ordering::Relaxed);
    }

    pub(crate) fn record_batch(&self) {
        self.batches.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            gets: self.gets.load(Ordering::Relaxed),
            system_gets: self.system_gets.load(Ordering::Relaxed),
            bulk_gets: self.bulk_gets.load(Ordering::Relaxed),
            bulk_keys: self.bulk_keys.load(Ordering::Relaxed),
            batches: self.batches.load(Ordering::Relaxed),
        }
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            gets: self.gets - rhs.gets,
            system_gets: self.system_gets - rhs.system_gets,
            bulk_gets: self.bulk_gets - rhs.bulk_gets,
            bulk_keys: self.bulk_keys - rhs.bulk_keys,
            batches: self.batches - rhs.batches,
        }
    }
}

/// Backend-neutral versioned key-value store.
///
/// Readers may run concurrently with each other; `apply_write_batch` must
/// not overlap any other call. Only one block is in flight at a time, so
/// reads between two batches always see the same committed snapshot.
pub trait StateDb: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Latest committed value and version of `key`.
    fn get(&self, key: &Key) -> Result<Option<VersionedValue>>;

    /// `get` over every key against one snapshot; element `i` answers `keys[i]`.
    fn bulk_get(&self, keys: &[Key]) -> Result<Vec<Option<VersionedValue>>>;

    /// Atomically applies the write sets of the valid transactions of block
    /// `block_height` and advances the savepoint to it. For a key written
    /// by several transactions the highest `tx_index` wins.
    fn apply_write_batch(&self, block_height: u64, writes: &[(u32, &WriteSet)]) -> Result<()>;

    fn get_savepoint(&self) -> Result<Option<u64>>;

    /// Every stored entry, raw, in key order. Includes the savepoint.
    fn dump(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>>;

    fn stats(&self) -> &OpStats;

    fn failpoint(&self) -> &FailPoint;
}

pub(crate) fn encode_key(key: &Key) -> Vec<u8> {
    let mut out = Vec::with_capacity(key.namespace.len() + 1 + key.name.len());
    out.extend_from_slice(key.namespace.as_bytes());
    out.push(0);
    out.extend_from_slice(&key.name);
    out
}

pub(crate) fn encode_value(value: &[u8], version: Version) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + value.len());
    out.extend_from_slice(&version.block_height.to_le_bytes());
    out.extend_from_slice(&version.tx_index.to_le_bytes());
    out.extend_from_slice(value);
    out
}

pub(crate) fn decode_value(raw: &[u8]) -> Result<VersionedValue> {
    if raw.len() < 12 {
        return Err(crate::error::StorageError::Corrupt(format!(
            "versioned value of {} bytes",
            raw.len()
        ))
        .into());
    }
    Ok(VersionedValue {
        version: Version {
            block_height: u64::from_le_bytes(raw[..8].try_into().unwrap()),
            tx_index: u32::from_le_bytes(raw[8..12].try_into().unwrap()),
        },
        value: raw[12..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_latency_model_amortizes_bulk_reads() {
        let m = LatencyModel::default();
        assert!(m.bulk_amortizes());
        assert_eq!(m.bulk_cost_us(100), 400 + 500);
        assert_eq!(m.write_cost_us(10), 800);
    }

    #[test]
    fn namespace_separator_keeps_savepoint_disjoint() {
        let k = encode_key(&Key::new("a", "b"));
        assert_eq!(k, b"a\0b");
        assert!(!k.starts_with(b"\0"));
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("slow_remote".parse::<BackendKind>().unwrap(), BackendKind::SlowRemote);
        assert_eq!("LevelDB".parse::<BackendKind>().unwrap(), BackendKind::FastEmbedded);
        assert!("mysql".parse::<BackendKind>().is_err());
    }
}
