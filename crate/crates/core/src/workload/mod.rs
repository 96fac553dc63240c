//! Smallbank workload: plays client, endorsers, and orderer. Generates
//! transactions, simulates endorsement against a model of committed
//! state, and cuts them into chained blocks.

mod smallbank;

use std::collections::{HashMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::codec::encode_chaincode_info;
use crate::crypto::{compute_data_hash, header_hash};
use crate::error::{Error, Result};
use crate::policy::EndorsementPolicy;
use crate::stores::Stores;
use crate::types::{Block, ChaincodeInfo, Digest, Key, ReadSet, Transaction, ValidationCode, Version, WriteSet,
    SYSTEM_NAMESPACE};

pub use smallbank::{
    checking_key, decode_balance, encode_balance, endorse, savings_key, sign, signer_of, AppError, SmallbankOp,
    StateView, OP_KINDS,
};

pub const DEFAULT_CHAINCODE: &str = "smallbank";
const UNKNOWN_CHAINCODE: &str = "unregistered";

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    /// Transactions after genesis.
    pub total_txs: usize,
    pub block_size: usize,
    /// Accounts created in genesis.
    pub num_accounts: u64,
    /// Relative weights, indexed by `SmallbankOp::kind`.
    pub op_weights: [u32; OP_KINDS],
    pub seed: u64,
    pub orgs: Vec<String>,
    /// Application chaincodes; accounts are spread over them by id.
    pub num_chaincodes: usize,
    pub initial_balance: i64,
    /// Chance that a transaction is endorsed against state one block stale.
    pub conflict_prob: f64,
    /// Chance that a transaction carries endorsements its policy rejects.
    pub policy_failure_prob: f64,
    pub unknown_chaincode_prob: f64,
    /// Chance that a transaction upgrades a chaincode, toggling its policy
    /// between all-of and any-of the orgs.
    pub upgrade_prob: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            total_txs: 30_000,
            block_size: 50,
            num_accounts: 1_000,
            op_weights: [1; OP_KINDS],
            seed: 42,
            orgs: vec!["Org1".into(), "Org2".into(), "Org3".into()],
            num_chaincodes: 1,
            initial_balance: 10_000,
            conflict_prob: 0.02,
            policy_failure_prob: 0.0,
            unknown_chaincode_prob: 0.0,
            upgrade_prob: 0.0,
        }
    }
}

impl WorkloadConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.block_size == 0 {
            return bad("block_size must be at least 1");
        }
        if self.num_accounts < 2 {
            return bad("num_accounts must be at least 2");
        }
        if self.orgs.is_empty() || self.orgs.iter().any(|o| o.is_empty()) {
            return bad("at least one non-empty org is required");
        }
        if self.num_chaincodes == 0 {
            return bad("num_chaincodes must be at least 1");
        }
        if self.op_weights.iter().all(|w| *w == 0) {
            return bad("op mix weights are all zero");
        }
        if self.initial_balance < 0 {
            return bad("initial_balance must be non-negative");
        }
        let probs = [
            self.conflict_prob,
            self.policy_failure_prob,
            self.unknown_chaincode_prob,
            self.upgrade_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.iter().sum::<f64>() > 1.0 {
            return bad("probabilities must lie in [0, 1] and sum to at most 1");
        }
        Ok(())
    }

    pub fn chaincode_names(&self) -> Vec<String> {
        if self.num_chaincodes == 1 {
            vec![DEFAULT_CHAINCODE.to_string()]
        } else {
            (0..self.num_chaincodes).map(|i| format!("{DEFAULT_CHAINCODE}-{i}")).collect()
        }
    }

    /// Application chaincodes plus the system chaincode, as instantiated
    /// in genesis.
    pub fn chaincodes(&self) -> Vec<ChaincodeInfo> {
        let mut out: Vec<_> = self
            .chaincode_names()
            .into_iter()
            .map(|name| ChaincodeInfo {
                chaincode_id: name,
                version: "1".into(),
                policy: EndorsementPolicy::all_of(&self.orgs),
            })
            .collect();
        out.push(ChaincodeInfo {
            chaincode_id: SYSTEM_NAMESPACE.into(),
            version: "1".into(),
            policy: EndorsementPolicy::any_of(&self.orgs),
        });
        out
    }

    pub fn num_blocks(&self) -> usize {
        self.total_txs.div_ceil(self.block_size.max(1))
    }
}

/// Chains `txs` into blocks of `block_size` numbered from `first`; the last
/// block may be short.
pub fn make_blocks(txs: Vec<Transaction>, block_size: usize, first: u64, prev_hash: Digest) -> Vec<Block> {
    assert!(block_size >= 1, "block_size must be at least 1");
    let mut assembler = BlockAssembler::new(first, prev_hash);
    let mut out = Vec::with_capacity(txs.len().div_ceil(block_size));
    let mut iter = txs.into_iter().peekable();
    while iter.peek().is_some() {
        out.push(assembler.cut(iter.by_ref().take(block_size).collect()));
    }
    out
}

/// Numbers and links blocks as they are cut.
#[derive(Clone, Debug)]
pub struct BlockAssembler {
    next: u64,
    prev_hash: Digest,
}

impl BlockAssembler {
    pub fn new(next: u64, prev_hash: Digest) -> Self {
        BlockAssembler { next, prev_hash }
    }

    /// Continues the chain after `block`.
    pub fn after(block: &Block) -> Self {
        BlockAssembler::new(block.number + 1, header_hash(block))
    }

    pub fn cut(&mut self, transactions: Vec<Transaction>) -> Block {
        let block = Block {
            number: self.next,
            prev_hash: self.prev_hash,
            data_hash: compute_data_hash(&transactions),
            transactions,
        };
        self.next += 1;
        self.prev_hash = header_hash(&block);
        block
    }
}

fn account_namespace(names: &[String], id: u64) -> &str {
    &names[(id % names.len() as u64) as usize]
}

/// Block 0: transaction `i < num_accounts` creates account `i` (so both of
/// its keys sit at version `(0, i)`), followed by one definition write per
/// chaincode. Every transaction is marked valid.
pub fn genesis_block(cfg: &WorkloadConfig) -> Block {
    let names = cfg.chaincode_names();
    let mut txs = Vec::new();
    for id in 0..cfg.num_accounts {
        let ns = account_namespace(&names, id);
        let mut ws = WriteSet::default();
        ws.put(checking_key(ns, id), encode_balance(cfg.initial_balance));
        ws.put(savings_key(ns, id), encode_balance(cfg.initial_balance));
        txs.push(genesis_tx(format!("genesis-account-{id}"), ns, ws, cfg));
    }
    for info in cfg.chaincodes() {
        let mut ws = WriteSet::default();
        ws.put(Key::chaincode_definition(&info.chaincode_id), encode_chaincode_info(&info));
        txs.push(genesis_tx(format!("genesis-cc-{}", info.chaincode_id), SYSTEM_NAMESPACE, ws, cfg));
    }
    let mut block = BlockAssembler::new(0, Digest::ZERO).cut(txs);
    for tx in &mut block.transactions {
        tx.validation_code = ValidationCode::Valid;
    }
    block
}

fn genesis_tx(tx_id: String, chaincode: &str, ws: WriteSet, cfg: &WorkloadConfig) -> Transaction {
    let mut tx = Transaction {
        tx_id,
        chaincode_id: chaincode.to_string(),
        payload: b"init".to_vec(),
        read_set: ReadSet::default(),
        write_set: ws,
        endorsements: Vec::new(),
        validation_code: ValidationCode::NotValidated,
    };
    sign(&mut tx, &cfg.orgs);
    tx
}

/// Writes the genesis block to all three stores. The stores must be empty.
pub fn seed_genesis(stores: &Stores, genesis: &Block) -> Result<()> {
    if genesis.number != 0 {
        return Err(Error::Protocol(format!("genesis must be block 0, got {}", genesis.number)));
    }
    if !stores.is_empty()? {
        return Err(Error::Protocol("stores are not empty".into()));
    }
    stores.ledger.append_block(genesis)?;
    stores.statedb.apply_write_batch(0, &genesis.valid_writes())?;
    stores.history.append_history(genesis)?;
    Ok(())
}

/// A generated stream: genesis, the blocks after it, and the code each
/// transaction is expected to end with.
#[derive(Clone, Debug)]
pub struct Workload {
    pub genesis: Block,
    pub blocks: Vec<Block>,
    pub expected: Vec<Vec<ValidationCode>>,
}

impl Workload {
    pub fn generate(cfg: &WorkloadConfig) -> Result<Self> {
        let mut g = Generator::new(cfg)?;
        let mut txs = Vec::with_capacity(cfg.total_txs);
        let mut expected = Vec::with_capacity(cfg.num_blocks());
        let mut remaining = cfg.total_txs;
        let mut number = 1;
        while remaining > 0 {
            let n = remaining.min(cfg.block_size);
            let (block_txs, codes) = g.next_block(number, n);
            txs.extend(block_txs);
            expected.push(codes);
            remaining -= n;
            number += 1;
        }
        let genesis = g.genesis;
        let blocks = make_blocks(txs, cfg.block_size, 1, header_hash(&genesis));
        Ok(Workload {
            genesis,
            blocks,
            expected,
        })
    }

    pub fn num_txs(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum()
    }

    pub fn expected_count(&self, code: ValidationCode) -> usize {
        self.expected.iter().flatten().filter(|c| **c == code).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Upgrade,
    Unknown,
    PolicyFailure,
    Stale,
    Normal,
}

/// Tracks the state the pipeline will have committed after each block, so
/// that normal transactions endorse against fresh state and their expected
/// codes are known in advance.
struct Generator<'a> {
    cfg: &'a WorkloadConfig,
    rng: ChaCha8Rng,
    mix: WeightedIndex<u32>,
    names: Vec<String>,
    genesis: Block,
    versions: HashMap<Key, Version>,
    balances: HashMap<Key, i64>,
    policies: HashMap<String, ChaincodeInfo>,
    accounts: Vec<u64>,
    next_account: u64,
    /// Pre-block version and balance of each key the last block changed.
    before_last: HashMap<Key, Option<(Version, i64)>>,
    changed_last: Vec<u64>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a WorkloadConfig) -> Result<Self> {
        cfg.check()?;
        let genesis = genesis_block(cfg);
        let mut g = Generator {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            mix: WeightedIndex::new(cfg.op_weights).map_err(|e| Error::Config(e.to_string()))?,
            names: cfg.chaincode_names(),
            genesis: genesis.clone(),
            versions: HashMap::new(),
            balances: HashMap::new(),
            policies: cfg.chaincodes().into_iter().map(|c| (c.chaincode_id.clone(), c)).collect(),
            accounts: (0..cfg.num_accounts).collect(),
            next_account: cfg.num_accounts,
            before_last: HashMap::new(),
            changed_last: Vec::new(),
        };
        let txs: Vec<_> = genesis.transactions.iter().enumerate().map(|(i, t)| (i as u32, t)).collect();
        g.apply(0, &txs);
        g.before_last.clear();
        g.changed_last.clear();
        Ok(g)
    }

    fn view(&self, k: &Key) -> Option<(Version, i64)> {
        let v = *self.versions.get(k)?;
        Some((v, self.balances.get(k).copied().unwrap_or(0)))
    }

    fn stale_view(&self, k: &Key) -> Option<(Version, i64)> {
        match self.before_last.get(k) {
            Some(old) => *old,
            None => self.view(k),
        }
    }

    /// Records the writes of `valid` transactions of block `number`.
    fn apply(&mut self, number: u64, valid: &[(u32, &Transaction)]) {
        self.before_last.clear();
        self.changed_last.clear();
        for &(idx, tx) in valid {
            for w in &tx.write_set.entries {
                if !self.before_last.contains_key(&w.key) {
                    let old = self.view(&w.key);
                    self.before_last.insert(w.key.clone(), old);
                }
                self.versions.insert(w.key.clone(), Version::new(number, idx));
                if w.key.namespace == SYSTEM_NAMESPACE {
                    let info = crate::codec::decode_chaincode_info(w.value.as_deref().unwrap_or_default())
                        .expect("generated definition decodes");
                    self.policies.insert(info.chaincode_id.clone(), info);
                } else if let Some(b) = w.value.as_deref().and_then(decode_balance) {
                    self.balances.insert(w.key.clone(), b);
                }
            }
            if tx.chaincode_id != SYSTEM_NAMESPACE && !tx.write_set.entries.is_empty() {
                if let Some(id) = account_of(tx) {
                    self.changed_last.push(id);
                }
            }
        }
    }

    fn slot(&mut self) -> Slot {
        let c = self.cfg;
        let r: f64 = self.rng.gen();
        let mut edge = c.upgrade_prob;
        if r < edge {
            return Slot::Upgrade;
        }
        edge += c.unknown_chaincode_prob;
        if r < edge {
            return Slot::Unknown;
        }
        edge += c.policy_failure_prob;
        if r < edge {
            return Slot::PolicyFailure;
        }
        edge += c.conflict_prob;
        if r < edge {
            return Slot::Stale;
        }
        Slot::Normal
    }

    fn pick_free(&mut self, touched: &HashSet<u64>, same_ns_as: Option<u64>) -> Option<u64> {
        let n = self.names.len() as u64;
        for _ in 0..64 {
            let id = self.accounts[self.rng.gen_range(0..self.accounts.len())];
            if touched.contains(&id) {
                continue;
            }
            match same_ns_as {
                Some(other) if other == id || other % n != id % n => continue,
                _ => return Some(id),
            }
        }
        None
    }

    fn amount(&mut self) -> i64 {
        self.rng.gen_range(1..=100)
    }

    /// A fresh op on accounts no other expected-valid transaction of this
    /// block has touched.
    fn normal_op(&mut self, touched: &HashSet<u64>) -> SmallbankOp {
        let kind = self.mix.sample(&mut self.rng);
        let op = match kind {
            0 => None,
            1 => self.pick_free(touched, None).and_then(|from| {
                let to = self.pick_free(touched, Some(from))?;
                let amount = self.amount();
                Some(SmallbankOp::TransferMoney { from, to, amount })
            }),
            2 => self.pick_free(touched, None).map(|id| SmallbankOp::DepositCash { id, amount: 0 }),
            3 => self.pick_free(touched, None).map(|id| SmallbankOp::WriteCheck { id, amount: 0 }),
            4 => self.pick_free(touched, None).and_then(|from| {
                let to = self.pick_free(touched, Some(from))?;
                Some(SmallbankOp::Amalgamate { from, to })
            }),
            _ => self.pick_free(touched, None).map(|id| SmallbankOp::QueryBalance { id }),
        };
        match op {
            Some(SmallbankOp::DepositCash { id, .. }) => SmallbankOp::DepositCash { id, amount: self.amount() },
            Some(SmallbankOp::WriteCheck { id, .. }) => SmallbankOp::WriteCheck { id, amount: self.amount() },
            Some(op) => op,
            None => {
                let id = self.next_account;
                self.next_account += 1;
                SmallbankOp::CreateAccount { id }
            }
        }
    }

    fn endorse_op(&self, tx_id: &str, op: &SmallbankOp, stale: bool) -> Result<Transaction, AppError> {
        let ns = account_namespace(&self.names, primary_account(op));
        let view = |k: &Key| if stale { self.stale_view(k) } else { self.view(k) };
        endorse(tx_id, ns, op, &view, &self.cfg.orgs, self.cfg.initial_balance)
    }

    fn normal_tx(&mut self, tx_id: &str, touched: &mut HashSet<u64>) -> Transaction {
        loop {
            let op = self.normal_op(touched);
            if let Ok(tx) = self.endorse_op(tx_id, &op, false) {
                touched.extend(op_accounts(&op));
                return tx;
            }
        }
    }

    fn stale_tx(&mut self, tx_id: &str) -> Option<Transaction> {
        if self.changed_last.is_empty() {
            return None;
        }
        // Accounts created by the last block did not exist one block ago.
        let start = self.rng.gen_range(0..self.changed_last.len());
        let amount = self.amount();
        (0..self.changed_last.len()).find_map(|i| {
            let id = self.changed_last[(start + i) % self.changed_last.len()];
            self.endorse_op(tx_id, &SmallbankOp::WriteCheck { id, amount }, true).ok()
        })
    }

    fn upgrade_tx(&mut self, tx_id: &str, touched_cc: &mut HashSet<String>) -> Option<Transaction> {
        let name = self.names[self.rng.gen_range(0..self.names.len())].clone();
        if !touched_cc.insert(name.clone()) {
            return None;
        }
        let cur = &self.policies[&name];
        let policy = match cur.policy {
            EndorsementPolicy::And(_) => EndorsementPolicy::any_of(&self.cfg.orgs),
            _ => EndorsementPolicy::all_of(&self.cfg.orgs),
        };
        let next = ChaincodeInfo {
            chaincode_id: name.clone(),
            version: format!("{}", cur.version.parse::<u64>().unwrap_or(1) + 1),
            policy,
        };
        let key = Key::chaincode_definition(&name);
        let mut rs = ReadSet::default();
        rs.push(key.clone(), self.versions.get(&key).copied());
        let mut ws = WriteSet::default();
        ws.put(key, encode_chaincode_info(&next));
        let mut tx = Transaction {
            tx_id: tx_id.to_string(),
            chaincode_id: SYSTEM_NAMESPACE.into(),
            payload: format!("upgrade({name},{})", next.version).into_bytes(),
            read_set: rs,
            write_set: ws,
            endorsements: Vec::new(),
            validation_code: ValidationCode::NotValidated,
        };
        sign(&mut tx, &self.cfg.orgs);
        Some(tx)
    }

    fn unknown_tx(&mut self, tx_id: &str) -> Transaction {
        let mut ws = WriteSet::default();
        ws.put(Key::new(UNKNOWN_CHAINCODE, format!("k{}", self.rng.gen_range(0..1000u32))), b"x".to_vec());
        let mut tx = Transaction {
            tx_id: tx_id.to_string(),
            chaincode_id: UNKNOWN_CHAINCODE.into(),
            payload: b"invoke()".to_vec(),
            read_set: ReadSet::default(),
            write_set: ws,
            endorsements: Vec::new(),
            validation_code: ValidationCode::NotValidated,
        };
        sign(&mut tx, &self.cfg.orgs);
        tx
    }

    /// Breaks the endorsements of `tx` so its chaincode's policy (as of
    /// the start of the block) rejects it.
    fn break_endorsements(&mut self, tx: &mut Transaction) {
        let all_of = matches!(self.policies[&tx.chaincode_id].policy, EndorsementPolicy::And(_));
        if all_of && tx.endorsements.len() >= 2 && self.rng.gen_bool(0.5) {
            let drop = self.rng.gen_range(0..tx.endorsements.len());
            tx.endorsements.remove(drop);
        } else {
            for e in &mut tx.endorsements {
                e.tag[0] ^= 0xff;
            }
        }
    }

    fn next_block(&mut self, number: u64, n: usize) -> (Vec<Transaction>, Vec<ValidationCode>) {
        let mut txs = Vec::with_capacity(n);
        let mut codes = Vec::with_capacity(n);
        let mut touched = HashSet::new();
        let mut touched_cc = HashSet::new();
        for i in 0..n {
            let tx_id = format!("tx-{number}-{i}");
            let (tx, code) = match self.slot() {
                Slot::Upgrade => match self.upgrade_tx(&tx_id, &mut touched_cc) {
                    Some(tx) => (tx, ValidationCode::Valid),
                    None => (self.normal_tx(&tx_id, &mut touched), ValidationCode::Valid),
                },
                Slot::Unknown => (self.unknown_tx(&tx_id), ValidationCode::UnknownChaincode),
                Slot::PolicyFailure => {
                    let mut scratch = touched.clone();
                    let mut tx = self.normal_tx(&tx_id, &mut scratch);
                    self.break_endorsements(&mut tx);
                    (tx, ValidationCode::PolicyFailure)
                }
                Slot::Stale => match self.stale_tx(&tx_id) {
                    Some(tx) => (tx, ValidationCode::MvccConflict),
                    None => (self.normal_tx(&tx_id, &mut touched), ValidationCode::Valid),
                },
                Slot::Normal => (self.normal_tx(&tx_id, &mut touched), ValidationCode::Valid),
            };
            txs.push(tx);
            codes.push(code);
        }
        let valid: Vec<(u32, &Transaction)> = txs
            .iter()
            .zip(&codes)
            .enumerate()
            .filter(|(_, (_, c))| **c == ValidationCode::Valid)
            .map(|(i, (t, _))| (i as u32, t))
            .collect();
        let created: Vec<u64> = valid
            .iter()
            .filter_map(|(_, t)| match parse_payload(&t.payload) {
                Some(SmallbankOp::CreateAccount { id }) => Some(id),
                _ => None,
            })
            .collect();
        self.apply(number, &valid);
        self.accounts.extend(created);
        (txs, codes)
    }
}

fn primary_account(op: &SmallbankOp) -> u64 {
    op_accounts(op)[0]
}

fn op_accounts(op: &SmallbankOp) -> Vec<u64> {
    match *op {
        SmallbankOp::CreateAccount { id }
        | SmallbankOp::DepositCash { id, .. }
        | SmallbankOp::WriteCheck { id, .. }
        | SmallbankOp::QueryBalance { id } => vec![id],
        SmallbankOp::TransferMoney { from, to, .. } | SmallbankOp::Amalgamate { from, to } => vec![from, to],
    }
}

fn account_of(tx: &Transaction) -> Option<u64> {
    parse_payload(&tx.payload).map(|op| primary_account(&op))
}

/// Inverse of `SmallbankOp::payload`.
pub fn parse_payload(payload: &[u8]) -> Option<SmallbankOp> {
    let s = std::str::from_utf8(payload).ok()?;
    let (name, rest) = s.split_once('(')?;
    let args: Vec<&str> = rest.strip_suffix(')')?.split(',').collect();
    let u = |i: usize| args.get(i)?.parse::<u64>().ok();
    let a = |i: usize| args.get(i)?.parse::<i64>().ok();
    Some(match name {
        "create_account" => SmallbankOp::CreateAccount { id: u(0)? },
        "transfer_money" => SmallbankOp::TransferMoney { from: u(0)?, to: u(1)?, amount: a(2)? },
        "deposit_cash" => SmallbankOp::DepositCash { id: u(0)?, amount: a(1)? },
        "write_check" => SmallbankOp::WriteCheck { id: u(0)?, amount: a(1)? },
        "amalgamate" => SmallbankOp::Amalgamate { from: u(0)?, to: u(1)? },
        "query_balance" => SmallbankOp::QueryBalance { id: u(0)? },
        _ => return None,
    })
}
