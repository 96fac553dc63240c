use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam::channel::{self, Sender};

use super::{BackendKind, EmbeddedStateDb, LatencyModel, OpStats, StateDb, VersionedValue};
use crate::error::{Result, StorageError};
use crate::fault::FailPoint;
use crate::storage::DiskConfig;
use crate::types::{Key, WriteSet};

type Job = Box<dyn FnOnce() + Send>;

/// Client-server style backend: every request is shipped to a service
/// thread, which waits out the modelled latency and then runs it against
/// an embedded store.
pub struct RemoteStateDb {
    server: Arc<EmbeddedStateDb>,
    latency: LatencyModel,
    jobs: Option<Sender<Job>>,
    threads: Vec<JoinHandle<()>>,
}

impl RemoteStateDb {
    pub fn open(
        dir: &Path,
        disk: DiskConfig,
        latency: LatencyModel,
        service_threads: usize,
    ) -> Result<Self> {
        let server = Arc::new(EmbeddedStateDb::open(dir, disk)?);
        let (tx, rx) = channel::unbounded::<Job>();
        let threads = (0..service_threads.max(1))
            .map(|i| {
                let rx = rx.clone();
                std::thread::Builder::new()
                    .name(format!("statedb-svc-{i}"))
                    .spawn(move || {
                        for job in rx {
                            job();
                        }
                    })
                    .expect("spawn state database service thread")
            })
            .collect();
        Ok(RemoteStateDb {
            server,
            latency,
            jobs: Some(tx),
            threads,
        })
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    fn call<T, F>(&self, cost_us: u64, op: F) -> Result<T>
    where
        T: Send + 'static,
        F: FnOnce(&EmbeddedStateDb) -> Result<T> + Send + 'static,
    {
        let server = Arc::clone(&self.server);
        let (reply_tx, reply_rx) = channel::bounded(1);
        let job: Job = Box::new(move || {
            if cost_us > 0 {
                std::thread::sleep(Duration::from_micros(cost_us));
            }
            let _ = reply_tx.send(op(&server));
        });
        self.jobs
            .as_ref()
            .ok_or(StorageError::Closed)?
            .send(job)
            .map_err(|_| StorageError::Closed)?;
        reply_rx.recv().map_err(|_| StorageError::Closed)?
    }
}

impl Drop for RemoteStateDb {
    fn drop(&mut self) {
        self.jobs.take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl StateDb for RemoteStateDb {
    fn kind(&self) -> BackendKind {
        BackendKind::SlowRemote
    }

    fn get(&self, key: &Key) -> Result<Option<VersionedValue>> {
        let key = key.clone();
        self.call(self.latency.read_cost_us(), move |db| db.get(&key))
    }

    fn bulk_get(&self, keys: &[Key]) -> Result<Vec<Option<VersionedValue>>> {
        let keys = keys.to_vec();
        self.call(self.latency.bulk_cost_us(keys.len()), move |db| db.bulk_get(&keys))
    }

    fn apply_write_batch(&self, block_height: u64, writes: &[(u32, &WriteSet)]) -> Result<()> {
        let keys: usize = writes.iter().map(|(_, w)| w.entries.len()).sum();
        let owned: Vec<(u32, WriteSet)> = writes.iter().map(|(i, w)| (*i, (*w).clone())).collect();
        self.call(self.latency.write_cost_us(keys), move |db| {
            let refs: Vec<(u32, &WriteSet)> = owned.iter().map(|(i, w)| (*i, w)).collect();
            db.apply_write_batch(block_height, &refs)
        })
    }

    fn get_savepoint(&self) -> Result<Option<u64>> {
        self.call(self.latency.read_base_us, |db| db.get_savepoint())
    }

    fn dump(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        self.server.dump()
    }

    fn stats(&self) -> &OpStats {
        self.server.stats()
    }

    fn failpoint(&self) -> &FailPoint {
        self.server.failpoint()
    }
}
