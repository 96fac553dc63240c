use std::path::Path;

use crate::error::{Result, StorageError};
use crate::fault::FailPoint;
use crate::statedb::{encode_key, SAVEPOINT_KEY};
use crate::storage::{BatchOp, DiskConfig, KvStore};
use crate::types::{Block, Key};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HistoryEntry {
    pub key: Key,
    pub block_height: u64,
    pub tx_index: u32,
}

/// Index of which transactions modified which keys.
///
/// Composite key: `u32 BE len | encoded key | u64 BE height | u32 BE tx`,
/// so all entries of one key are contiguous and sorted by version.
/// Deletions count as modifications.
pub struct HistoryDb {
    kv: KvStore,
}

fn key_prefix(key: &Key) -> Vec<u8> {
    let k = encode_key(key);
    let mut out = Vec::with_capacity(k.len() + 16);
    out.extend_from_slice(&(k.len() as u32).to_be_bytes());
    out.extend_from_slice(&k);
    out
}

pub fn composite_key(key: &Key, block_height: u64, tx_index: u32) -> Vec<u8> {
    let mut out = key_prefix(key);
    out.extend_from_slice(&block_height.to_be_bytes());
    out.extend_from_slice(&tx_index.to_be_bytes());
    out
}

impl HistoryDb {
    pub fn open(dir: &Path, disk: DiskConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(HistoryDb {
            kv: KvStore::open(&dir.join("history.log"), disk, "history database")?,
        })
    }

    pub fn failpoint(&self) -> &FailPoint {
        self.kv.failpoint()
    }

    /// Highest block whose entries have been recorded.
    pub fn savepoint(&self) -> Result<Option<u64>> {
        self.kv
            .get(SAVEPOINT_KEY)
            .map(|raw| {
                raw.as_slice()
                    .try_into()
                    .map(u64::from_le_bytes)
                    .map_err(|_| StorageError::Corrupt("history savepoint".into()).into())
            })
            .transpose()
    }

    /// Entries a block contributes: one per (valid transaction, written key).
    pub fn entries_for(block: &Block) -> Vec<HistoryEntry> {
        block
            .valid_writes()
            .into_iter()
            .flat_map(|(tx_index, ws)| {
                ws.keys().map(move |k| HistoryEntry {
                    key: k.clone(),
                    block_height: block.number,
                    tx_index,
                })
            })
            .collect()
    }

    /// Records the block's entries. Re-appending a block that is already
    /// covered by the savepoint is a no-op.
    pub fn append_history(&self, block: &Block) -> Result<()> {
        if self.savepoint()?.is_some_and(|sp| sp >= block.number) {
            return Ok(());
        }
        let mut ops: Vec<BatchOp> = Self::entries_for(block)
            .into_iter()
            .map(|e| BatchOp::Put(composite_key(&e.key, e.block_height, e.tx_index), Vec::new()))
            .collect();
        ops.push(BatchOp::Put(
            SAVEPOINT_KEY.to_vec(),
            block.number.to_le_bytes().to_vec(),
        ));
        self.kv.write(ops)
    }

    /// Every `(block_height, tx_index)` that modified `key`, ascending.
    pub fn history_of(&self, key: &Key) -> Vec<(u64, u32)> {
        let prefix = key_prefix(key);
        self.kv
            .scan_prefix(&prefix)
            .into_iter()
            .filter(|(k, _)| k.len() == prefix.len() + 12)
            .map(|(k, _)| {
                let tail = &k[prefix.len()..];
                (
                    u64::from_be_bytes(tail[..8].try_into().unwrap()),
                    u32::from_be_bytes(tail[8..].try_into().unwrap()),
                )
            })
            .collect()
    }

    pub fn dump(&self) -> Vec<(Vec<u8>, Vec<u8>)> {
        self.kv.dump()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Digest, ReadSet, Transaction, ValidationCode, WriteSet};

    fn tx(code: ValidationCode, keys: &[&str]) -> Transaction {
        let mut ws = WriteSet::default();
        for k in keys {
            ws.put(Key::new("ns", *k), b"v".to_vec());
        }
        Transaction {
            tx_id: "t".into(),
            chaincode_id: "cc".into(),
            payload: vec![],
            read_set: ReadSet::default(),
            write_set: ws,
            endorsements: vec![],
            validation_code: code,
        }
    }

    fn block(number: u64, txs: Vec<Transaction>) -> Block {
        Block {
            number,
            prev_hash: Digest::ZERO,
            data_hash: Digest::ZERO,
            transactions: txs,
        }
    }

    fn open() -> (tempfile::TempDir, HistoryDb) {
        let dir = tempfile::tempdir().unwrap();
        let h = HistoryDb::open(dir.path(), DiskConfig::volatile()).unwrap();
        (dir, h)
    }

    #[test]
    fn all_invalid_block_adds_nothing() {
        let (_d, h) = open();
        h.append_history(&block(1, vec![tx(ValidationCode::MvccConflict, &["a", "b"])]))
            .unwrap();
        assert_eq!(h.dump().len(), 1); // savepoint only
        assert!(h.history_of(&Key::new("ns", "a")).is_empty());
    }

    #[test]
    fn three_keys_three_entries() {
        let (_d, h) = open();
        let txs = vec![
            tx(ValidationCode::PolicyFailure, &["x"]),
            tx(ValidationCode::Valid, &[]),
            tx(ValidationCode::Valid, &["a", "b", "c"]),
        ];
        let b = block(4, txs);
        assert_eq!(HistoryDb::entries_for(&b).len(), 3);
        h.append_history(&b).unwrap();
        for k in ["a", "b", "c"] {
            assert_eq!(h.history_of(&Key::new("ns", k)), vec![(4, 2)]);
        }
    }

    #[test]
    fn ascending_history_and_prefix_isolation() {
        let (_d, h) = open();
        h.append_history(&block(3, vec![tx(ValidationCode::Valid, &["zz"]), tx(ValidationCode::Valid, &["k"])]))
            .unwrap();
        h.append_history(&block(9, vec![tx(ValidationCode::Valid, &["k", "kk"])]))
            .unwrap();
        assert_eq!(h.history_of(&Key::new("ns", "k")), vec![(3, 1), (9, 0)]);
        assert_eq!(h.history_of(&Key::new("ns", "kk")), vec![(9, 0)]);
        assert!(h.history_of(&Key::new("ns", "never")).is_empty());
    }

    #[test]
    fn append_is_idempotent_per_block() {
        let (_d, h) = open();
        let b = block(2, vec![tx(ValidationCode::Valid, &["a"])]);
        h.append_history(&b).unwrap();
        let once = h.dump();
        h.append_history(&b).unwrap();
        assert_eq!(h.dump(), once);
        assert_eq!(h.savepoint().unwrap(), Some(2));
    }

    #[test]
    fn deletions_are_recorded() {
        let (_d, h) = open();
        let mut t = tx(ValidationCode::Valid, &[]);
        t.write_set.delete(Key::new("ns", "gone"));
        h.append_history(&block(1, vec![t])).unwrap();
        assert_eq!(h.history_of(&Key::new("ns", "gone")), vec![(1, 0)]);
    }
}
