use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::Result;
use crate::ledger::{BlockStore, HistoryDb};
use crate::statedb::{BackendKind, EmbeddedStateDb, LatencyModel, RemoteStateDb, StateDb};
use crate::storage::DiskConfig;

#[derive(Clone, Debug)]
pub struct StoreConfig {
    pub backend: BackendKind,
    /// Charged by the remote backend only.
    pub latency: LatencyModel,
    /// Local device behaviour for the ledger, history database, and the
    /// embedded state database.
    pub disk: DiskConfig,
    /// Persistence of the remote server's own log; its cost is already in
    /// `latency`.
    pub remote_disk: DiskConfig,
    pub service_threads: usize,
}

impl StoreConfig {
    pub fn new(backend: BackendKind) -> Self {
        StoreConfig {
            backend,
            latency: LatencyModel::default(),
            disk: DiskConfig::durable(),
            remote_disk: DiskConfig::volatile(),
            service_threads: 32,
        }
    }

    /// No syncing and no modelled latency; for correctness tests.
    pub fn in_memory_speed(backend: BackendKind) -> Self {
        StoreConfig {
            backend,
            latency: LatencyModel::zero(),
            disk: DiskConfig::volatile(),
            remote_disk: DiskConfig::volatile(),
            service_threads: 8,
        }
    }
}

/// Savepoints of the three stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heights {
    pub ledger: Option<u64>,
    pub state: Option<u64>,
    pub history: Option<u64>,
}

impl Heights {
    pub fn consistent(&self) -> bool {
        self.ledger == self.state && self.ledger == self.history
    }
}

/// The ledger, state database, and history database of one peer.
#[derive(Clone)]
pub struct Stores {
    pub statedb: Arc<dyn StateDb>,
    pub ledger: Arc<BlockStore>,
    pub history: Arc<HistoryDb>,
    dir: PathBuf,
}

impl Stores {
    pub fn open(dir: &Path, cfg: &StoreConfig) -> Result<Self> {
        let statedb: Arc<dyn StateDb> = match cfg.backend {
            BackendKind::FastEmbedded => Arc::new(EmbeddedStateDb::open(&dir.join("state"), cfg.disk)?),
            BackendKind::SlowRemote => Arc::new(RemoteStateDb::open(
                &dir.join("state"),
                cfg.remote_disk,
                cfg.latency,
                cfg.service_threads,
            )?),
        };
        Ok(Stores {
            statedb,
            ledger: Arc::new(BlockStore::open(&dir.join("ledger"), cfg.disk)?),
            history: Arc::new(HistoryDb::open(&dir.join("history"), cfg.disk)?),
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn backend(&self) -> BackendKind {
        self.statedb.kind()
    }

    pub fn heights(&self) -> Result<Heights> {
        Ok(Heights {
            ledger: self.ledger.height(),
            state: self.statedb.get_savepoint()?,
            history: self.history.savepoint()?,
        })
    }

    pub fn is_empty(&self) -> Result<bool> {
        let h = self.heights()?;
        Ok(h.ledger.is_none() && h.state.is_none() && h.history.is_none())
    }
}
