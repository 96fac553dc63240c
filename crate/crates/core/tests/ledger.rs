use std::collections::{BTreeMap, BTreeSet};

use valphase::ledger::HistoryEntry;
use valphase::{
    seed_genesis, BackendKind, BlockStore, DiskConfig, HistoryDb, Key, Mode, Pipeline, PipelineConfig, StoreConfig,
    Stores, Workload, WorkloadConfig,
};

fn committed_run() -> (tempfile::TempDir, Stores) {
    let w = Workload::generate(&WorkloadConfig {
        total_txs: 4_000,
        block_size: 20,
        num_accounts: 150,
        seed: 4,
        conflict_prob: 0.1,
        policy_failure_prob: 0.05,
        unknown_chaincode_prob: 0.02,
        upgrade_prob: 0.01,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = Stores::open(dir.path(), &StoreConfig::in_memory_speed(BackendKind::FastEmbedded)).unwrap();
    seed_genesis(&s, &w.genesis).unwrap();
    let mut cfg = PipelineConfig::new(Mode::Optimized, BackendKind::FastEmbedded);
    cfg.vscc.workers = 2;
    Pipeline::new(cfg, s.clone()).unwrap().run_stream(w.blocks).unwrap();
    (dir, s)
}

#[test]
fn history_equals_a_ledger_scan() {
    let (_d, s) = committed_run();
    let mut oracle: BTreeMap<Key, Vec<(u64, u32)>> = BTreeMap::new();
    for n in 0..=s.ledger.height().unwrap() {
        let b = s.ledger.get_block(n).unwrap();
        for (i, tx) in b.transactions.iter().enumerate() {
            if !tx.is_valid() {
                continue;
            }
            let keys: BTreeSet<&Key> = tx.write_set.keys().collect();
            for k in keys {
                oracle.entry(k.clone()).or_default().push((n, i as u32));
            }
        }
    }
    assert!(oracle.len() > 300);
    for (k, want) in &oracle {
        assert_eq!(&s.history.history_of(k), want, "{k}");
    }
    assert!(s.history.history_of(&Key::new("smallbank", "nobody")).is_empty());
}

#[test]
fn block_entries_equal_nested_loop_over_valid_writes() {
    let (_d, s) = committed_run();
    for n in 1..=s.ledger.height().unwrap() {
        let b = s.ledger.get_block(n).unwrap();
        let mut want = BTreeSet::new();
        for (i, tx) in b.transactions.iter().enumerate() {
            for w in &tx.write_set.entries {
                if tx.is_valid() {
                    want.insert((w.key.clone(), n, i as u32));
                }
            }
        }
        let got: BTreeSet<_> = HistoryDb::entries_for(&b)
            .into_iter()
            .map(|HistoryEntry { key, block_height, tx_index }| (key, block_height, tx_index))
            .collect();
        assert_eq!(got, want, "block {n}");
    }
}

#[test]
fn blocks_read_back_after_many_appends_and_reopen() {
    let (_d, s) = committed_run();
    let height = s.ledger.height().unwrap();
    assert!(height >= 200);
    let blocks: Vec<_> = (0..=height).map(|n| s.ledger.get_block(n).unwrap()).collect();

    let dir = tempfile::tempdir().unwrap();
    {
        let store = BlockStore::open(dir.path(), DiskConfig::volatile()).unwrap();
        for b in &blocks {
            store.append_block(b).unwrap();
        }
        assert!(store.get_block(height + 1).is_err());
    }
    let store = BlockStore::open(dir.path(), DiskConfig::volatile()).unwrap();
    assert_eq!(store.height(), Some(height));
    for b in &blocks {
        assert_eq!(&store.get_block(b.number).unwrap(), b);
    }
    assert_eq!(store.file_bytes().unwrap(), s.ledger.file_bytes().unwrap());
}
