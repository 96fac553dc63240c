//! Multi-version concurrency control check.
//!
//! A candidate transaction is valid iff every key it read still has the
//! version it read, and no earlier valid transaction in the same block
//! wrote that key. Committed versions come either from a snapshot built
//! with one bulk read (remote backend) or from direct reads issued during
//! the check (embedded backend).

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::statedb::StateDb;
use crate::types::{Block, Key, Transaction, ValidationCode, Version};

/// Committed version of every key read by a set of transactions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadSnapshot {
    versions: HashMap<Key, Option<Version>>,
}

impl ReadSnapshot {
    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    /// `None` if the key is not covered; `Some(None)` if it is absent from state.
    pub fn get(&self, key: &Key) -> Option<Option<Version>> {
        self.versions.get(key).copied()
    }
}

/// Transactions still eligible after the earlier stages.
pub fn candidates<'a>(
    block: &'a Block,
    codes: &'a [ValidationCode],
) -> impl Iterator<Item = &'a Transaction> + 'a {
    block
        .transactions
        .iter()
        .zip(codes)
        .filter(|(_, c)| **c == ValidationCode::NotValidated)
        .map(|(tx, _)| tx)
}

/// Reads the union of the read sets of `txs` in one bulk request. Keys are
/// deduplicated before the request, keeping first-occurrence order.
pub fn build_snapshot_bulk<'a>(
    statedb: &dyn StateDb,
    txs: impl IntoIterator<Item = &'a Transaction>,
) -> Result<ReadSnapshot> {
    let mut seen = HashSet::new();
    let mut keys = Vec::new();
    for tx in txs {
        for k in tx.read_set.keys() {
            if seen.insert(k) {
                keys.push(k.clone());
            }
        }
    }
    if keys.is_empty() {
        return Ok(ReadSnapshot::default());
    }
    let values = statedb.bulk_get(&keys)?;
    Ok(ReadSnapshot {
        versions: keys
            .into_iter()
            .zip(values)
            .map(|(k, v)| (k, v.map(|vv| vv.version)))
            .collect(),
    })
}

/// Finalizes `codes`: candidates (`NotValidated`) become `Valid` or
/// `MvccConflict`; other codes are left alone and their read sets ignored.
pub fn mvcc_validate(
    block: &Block,
    codes: &mut [ValidationCode],
    snapshot: Option<&ReadSnapshot>,
    statedb: &dyn StateDb,
) -> Result<()> {
    let mut written: HashSet<&Key> = HashSet::new();
    for (tx, code) in block.transactions.iter().zip(codes.iter_mut()) {
        if *code != ValidationCode::NotValidated {
            continue;
        }
        let mut conflict = false;
        for read in &tx.read_set.entries {
            if written.contains(&read.key) {
                conflict = true;
                break;
            }
            let committed = match snapshot {
                Some(s) => s.get(&read.key).ok_or_else(|| {
                    Error::Protocol(format!("read snapshot does not cover {}", read.key))
                })?,
                None => statedb.get(&read.key)?.map(|vv| vv.version),
            };
            if committed != read.version {
                conflict = true;
                break;
            }
        }
        if conflict {
            *code = ValidationCode::MvccConflict;
        } else {
            *code = ValidationCode::Valid;
            written.extend(tx.write_set.keys());
        }
    }
    Ok(())
}
