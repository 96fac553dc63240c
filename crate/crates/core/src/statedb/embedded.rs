use std::path::Path;

use super::{
    decode_value, encode_key, encode_value, BackendKind, OpStats, StateDb, VersionedValue,
    SAVEPOINT_KEY,
};
use crate::error::{Error, Result, StorageError};
use crate::fault::FailPoint;
use crate::storage::{BatchOp, DiskConfig, KvStore};
use crate::types::{Key, Version, WriteSet};

pub struct EmbeddedStateDb {
    kv: KvStore,
    stats: OpStats,
}

impl EmbeddedStateDb {
    /// Opens the store in `dir`, creating the directory if needed.
    pub fn open(dir: &Path, disk: DiskConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(EmbeddedStateDb {
            kv: KvStore::open(&dir.join("state.log"), disk, "state database")?,
            stats: OpStats::default(),
        })
    }

    pub(crate) fn batch_ops(
        &self,
        block_height: u64,
        writes: &[(u32, &WriteSet)],
    ) -> Result<Vec<BatchOp>> {
        if let Some(sp) = self.savepoint()? {
            if block_height <= sp {
                return Err(Error::Protocol(format!(
                    "write batch for height {block_height} at savepoint {sp}"
                )));
            }
        }
        let mut ordered: Vec<_> = writes.to_vec();
        ordered.sort_by_key(|(idx, _)| *idx);
        let mut ops = Vec::new();
        for (tx_index, ws) in ordered {
            let version = Version::new(block_height, tx_index);
            for w in &ws.entries {
                let k = encode_key(&w.key);
                ops.push(match &w.value {
                    Some(v) => BatchOp::Put(k, encode_value(v, version)),
                    None => BatchOp::Delete(k),
                });
            }
        }
        ops.push(BatchOp::Put(
            SAVEPOINT_KEY.to_vec(),
            block_height.to_le_bytes().to_vec(),
        ));
        Ok(ops)
    }

    fn savepoint(&self) -> Result<Option<u64>> {
        self.kv
            .get(SAVEPOINT_KEY)
            .map(|raw| {
                raw.as_slice()
                    .try_into()
                    .map(u64::from_le_bytes)
                    .map_err(|_| StorageError::Corrupt("savepoint".into()).into())
            })
            .transpose()
    }
}

impl StateDb for EmbeddedStateDb {
    fn kind(&self) -> BackendKind {
        BackendKind::FastEmbedded
    }

    fn get(&self, key: &Key) -> Result<Option<VersionedValue>> {
        self.stats.record_get(key);
        self.kv
            .get(&encode_key(key))
            .map(|raw| decode_value(&raw))
            .transpose()
    }

    fn bulk_get(&self, keys: &[Key]) -> Result<Vec<Option<VersionedValue>>> {
        self.stats.record_bulk(keys.len());
        let encoded: Vec<Vec<u8>> = keys.iter().map(encode_key).collect();
        self.kv
            .get_many(encoded.iter().map(Vec::as_slice))
            .into_iter()
            .map(|raw| raw.map(|r| decode_value(&r)).transpose())
            .collect()
    }

    fn apply_write_batch(&self, block_height: u64, writes: &[(u32, &WriteSet)]) -> Result<()> {
        let ops = self.batch_ops(block_height, writes)?;
        self.kv.write(ops)?;
        self.stats.record_batch();
        Ok(())
    }

    fn get_savepoint(&self) -> Result<Option<u64>> {
        self.savepoint()
    }

    fn dump(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        Ok(self.kv.dump())
    }

    fn stats(&self) -> &OpStats {
        &self.stats
    }

    fn failpoint(&self) -> &FailPoint {
        self.kv.failpoint()
    }
}
